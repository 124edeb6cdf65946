#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "srt/numerics.hpp"
#include "srt/optimizer.hpp"

using namespace srt;

namespace {

Dataset random_dataset(Rng& rng, std::size_t n, int p) {
    Dataset ds;
    ds.X = Mat(n, static_cast<std::size_t>(p));
    ds.y.resize(n);
    for (int j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < static_cast<std::size_t>(p); ++j)
            ds.X(i, j) = rng.uniform(-2.0, 2.0);
        ds.y[i] = rng.uniform(-2.0, 2.0);
    }
    return ds;
}

// Single point at the origin with response 0; the per-leaf contributions are
// then just gate-probability-weighted squared intercept errors.
Dataset origin_point() {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(1, 1);
    ds.y = {0.0};
    return ds;
}

std::vector<double> flatten(const SrtModel& m) {
    std::vector<double> v(m.omega.data(), m.omega.data() + m.omega.size());
    v.insert(v.end(), m.beta.data(), m.beta.data() + m.beta.size());
    return v;
}

void unflatten(SrtModel& m, std::span<const double> v) {
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m.omega.size()),
              m.omega.data());
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(m.omega.size()), v.end(), m.beta.data());
}

double logit(double p) { return std::log(p / (1.0 - p)); }

} // namespace

TEST_CASE("working sets cover the subtree, with the root special-cased") {
    TreeTopology d3(3);
    auto ws = select_working_set(d3, 3);
    CHECK(ws.node == 3);
    CHECK(ws.branches == std::vector<int>{3, 6, 7});
    CHECK(ws.leaves == std::vector<int>{12, 13, 14, 15});

    // root of a deeper tree: gate only, no leaves
    auto root = select_working_set(TreeTopology(2), 1);
    CHECK(root.branches == std::vector<int>{1});
    CHECK(root.leaves.empty());

    // depth-1 root: the whole model
    auto tiny = select_working_set(TreeTopology(1), 1);
    CHECK(tiny.branches == std::vector<int>{1});
    CHECK(tiny.leaves == std::vector<int>{2, 3});

    CHECK_THROWS_AS(select_working_set(TreeTopology(2), 4), InvalidInputError); // leaf
    CHECK_THROWS_AS(select_working_set(TreeTopology(2), 0), InvalidInputError);
    CHECK_THROWS_AS(select_working_set(TreeTopology(2), 9), InvalidInputError);
}

TEST_CASE("training error on a hand-checkable one-point instance") {
    auto ds = origin_point();
    SrtModel m(1, 1);
    m.omega(0, 0) = logit(0.6);
    m.beta(0, 0) = 1.0; // left leaf predicts 1
    m.beta(1, 0) = 2.0; // right leaf predicts 2
    // E = 0.6 * 1^2 + 0.4 * 2^2 = 2.2
    CHECK(training_error(m, ds, 0.0, 0.0) == doctest::Approx(2.2));

    // neutral gate, both leaves exact: zero error
    SrtModel exact(1, 1);
    CHECK(training_error(exact, ds, 0.0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("ridge terms add half the squared parameter norms") {
    auto ds = origin_point();
    SrtModel m(1, 1);
    m.omega(0, 0) = 1.0;
    m.omega(0, 1) = std::sqrt(2.0); // |omega|^2 = 3, residuals all zero
    CHECK(training_error(m, ds, 2.0, 0.0) == doctest::Approx(3.0));
    m.beta(0, 0) = 0.0;
    m.beta(1, 0) = 0.0;
    m.beta(0, 1) = 2.0; // slope is inactive at x = 0 but fully penalized
    CHECK(training_error(m, ds, 2.0, 0.5) == doctest::Approx(3.0 + 0.25 * 4.0));
}

TEST_CASE("training error validates the inputs") {
    SrtModel m(1, 1);
    Dataset empty;
    empty.X = Mat(0, 1);
    CHECK_THROWS_AS(training_error(m, empty, 0.0, 0.0), InvalidInputError);
    Rng rng(1);
    auto wrong = random_dataset(rng, 4, 2);
    CHECK_THROWS_AS(training_error(m, wrong, 0.0, 0.0), InvalidInputError);
}

TEST_CASE("gradient reduces to the ridge part at zero residuals") {
    Rng rng(2);
    auto ds = random_dataset(rng, 12, 2);
    SrtModel m = SrtModel::random(2, 2, 1.0, rng, 1.5);
    // all leaves predict the constant 0.7 and every response equals it
    for (std::size_t r = 0; r < m.beta.rows(); ++r) {
        m.beta(r, 0) = 0.7;
        m.beta(r, 1) = 0.0;
        m.beta(r, 2) = 0.0;
    }
    for (auto& v : ds.y) v = 0.7;
    const double lo = 2.0, lb = 0.5;
    std::vector<int> nodes{1, 2, 3, 4, 5, 6, 7};
    auto grads = grad_error(m, ds, lo, lb, nodes);
    for (const auto& ng : grads) {
        if (m.tree.is_leaf(ng.node)) {
            auto cur = m.beta.row(m.tree.leaf_col(ng.node));
            for (std::size_t j = 0; j < ng.grad.size(); ++j) CHECK(ng.grad[j] == lb * cur[j]);
        } else {
            auto cur = m.omega.row(m.tree.branch_col(ng.node));
            for (std::size_t j = 0; j < ng.grad.size(); ++j) CHECK(ng.grad[j] == lo * cur[j]);
        }
    }
}

TEST_CASE("leaf gradient on one point matches the closed form") {
    auto ds = origin_point();
    SrtModel m(1, 1);
    m.omega(0, 0) = logit(0.6);
    m.beta(0, 0) = 1.0;
    m.beta(1, 0) = 2.0;
    auto grads = grad_error(m, ds, 0.0, 0.0, std::vector<int>{2, 3});
    // d E / d beta0 = 2 p_leaf (yhat - y): left 2*0.6*1, right 2*0.4*2
    CHECK(grads[0].grad[0] == doctest::Approx(1.2));
    CHECK(grads[1].grad[0] == doctest::Approx(1.6));
    // slope components vanish at x = 0
    CHECK(grads[0].grad[1] == doctest::Approx(0.0));
    CHECK(grads[1].grad[1] == doctest::Approx(0.0));

    CHECK_THROWS_AS(grad_error(m, ds, 0.0, 0.0, std::vector<int>{8}), InvalidInputError);
}

TEST_CASE("analytic gradients agree with central differences") {
    Rng rng(14);
    for (int trial = 0; trial < 6; ++trial) {
        const int depth = 1 + static_cast<int>(rng.below(2));
        const int p = 1 + static_cast<int>(rng.below(3));
        auto ds = random_dataset(rng, 5 + rng.below(10), p);
        auto m = SrtModel::random(depth, p, 0.5 + rng.uniform01(), rng, 1.0);
        const double lo = 0.3, lb = 0.2;

        auto f = [&](std::span<const double> v) {
            SrtModel probe = m;
            unflatten(probe, v);
            return training_error(probe, ds, lo, lb);
        };
        const auto x0 = flatten(m);
        auto fd = finite_diff_grad(f, x0, 1e-6);

        std::vector<int> nodes;
        for (int t = 1; t <= m.tree.last_leaf(); ++t) nodes.push_back(t);
        auto an = grad_error(m, ds, lo, lb, nodes);
        const std::size_t d = static_cast<std::size_t>(p) + 1;
        for (const auto& ng : an) {
            const std::size_t base =
                m.tree.is_leaf(ng.node)
                    ? m.omega.size() + static_cast<std::size_t>(m.tree.leaf_col(ng.node)) * d
                    : static_cast<std::size_t>(m.tree.branch_col(ng.node)) * d;
            for (std::size_t j = 0; j < d; ++j) {
                const double a = ng.grad[j], b = fd[base + j];
                CHECK(std::abs(a - b) <= 1e-5 * std::max({1.0, std::abs(a), std::abs(b)}));
            }
        }
    }
}

TEST_CASE("gate descent step satisfies the sufficient-decrease contract") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const int depth = 1 + static_cast<int>(rng.below(2));
        auto ds = random_dataset(rng, 30, 2);
        auto m = SrtModel::random(depth, 2, 1.0, rng, 1.5);
        TrainConfig cfg;
        cfg.depth = depth;
        cfg.lambda_omega = 0.1;
        const auto ws = select_working_set(m.tree, 1);
        const double alpha = armijo_step(m, ds, ws, cfg);
        CHECK(alpha > 0.0);
        CHECK(alpha <= cfg.armijo_a);

        // re-apply the step and re-check the inequality it promised
        auto grads = grad_error(m, ds, cfg.lambda_omega, cfg.lambda_beta, ws.branches);
        double gg = 0.0;
        for (const auto& ng : grads) gg += norm2sq(ng.grad);
        SrtModel stepped = m;
        for (std::size_t b = 0; b < ws.branches.size(); ++b) {
            auto row = stepped.omega.row(stepped.tree.branch_col(ws.branches[b]));
            for (std::size_t j = 0; j < row.size(); ++j) row[j] -= alpha * grads[b].grad[j];
        }
        const double f0 = training_error(m, ds, cfg.lambda_omega, cfg.lambda_beta);
        const double f1 = training_error(stepped, ds, cfg.lambda_omega, cfg.lambda_beta);
        CHECK(f1 <= f0 - cfg.armijo_gamma * alpha * gg + 1e-12 * std::max(1.0, std::abs(f0)));
    }
}

TEST_CASE("gate descent returns the full step length at a stationary block") {
    auto ds = origin_point();
    SrtModel m(1, 1); // zero parameters, zero residuals, zero ridge: flat objective
    TrainConfig cfg;
    cfg.depth = 1;
    CHECK(armijo_step(m, ds, select_working_set(m.tree, 1), cfg) == cfg.armijo_a);
}

TEST_CASE("routing-refit loss is the weighted logistic loss") {
    Mat rows(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        rows(i, 0) = 1.0;
        rows(i, 1) = static_cast<double>(i) - 1.5;
    }
    const std::vector<double> labels{0.0, 0.0, 1.0, 1.0};
    const std::vector<double> ones(4, 1.0);
    const std::vector<double> zero{0.0, 0.0};

    // neutral gate scores ln 2 with unit weights
    CHECK(wlr_objective(rows, labels, ones, zero, 1.0) == doctest::Approx(std::log(2.0)));
    // ... and with the balanced class weights, for any class split
    const std::vector<double> skew{0.0, 1.0, 1.0, 1.0};
    auto w = wlr_weights(skew);
    CHECK(w == std::vector<double>{2.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0});
    CHECK(wlr_objective(rows, skew, w, zero, 1.0) == doctest::Approx(std::log(2.0)));

    // a separating gate drives the loss toward zero
    const std::vector<double> sharp{-0.0, 8.0}; // boundary at x = 0 with steep slope
    CHECK(wlr_objective(rows, labels, ones, sharp, 2.0) < 0.02);

    const std::vector<double> one_class{1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS_AS(wlr_weights(one_class), DegenerateWeightsError);
    const std::vector<double> short_w{1.0};
    CHECK_THROWS_AS(wlr_objective(rows, labels, short_w, zero, 1.0), InvalidInputError);
}

TEST_CASE("partial residuals weight subtree errors by path probability") {
    Rng rng(31);
    auto ds = random_dataset(rng, 8, 2);
    auto m = SrtModel::random(2, 2, 1.0, rng, 1.5);

    for (std::size_t i = 0; i < ds.n(); ++i) {
        // full tree from the root: the per-point contribution to the error sum
        auto probs = leaf_probabilities(m, ds.X.row(i));
        double want = 0.0;
        for (int leaf = m.tree.first_leaf(); leaf <= m.tree.last_leaf(); ++leaf) {
            const double r = m.leaf_output(leaf, ds.X.row(i)) - ds.y[i];
            want += probs[static_cast<std::size_t>(m.tree.leaf_col(leaf))] * r * r;
        }
        CHECK(partial_residual(m, ds, i, 1, false) == doctest::Approx(want).epsilon(1e-11));
        CHECK(partial_residual(m, ds, i, 1, true) == doctest::Approx(want).epsilon(1e-11));

        // subtree at node 2: the as-root version drops the root gate factor
        const double g1 = branch_probability(m, 1, ds.X.row(i));
        const double sub_full = partial_residual(m, ds, i, 2, false);
        const double sub_rooted = partial_residual(m, ds, i, 2, true);
        CHECK(sub_full == doctest::Approx(g1 * sub_rooted).epsilon(1e-11));
    }
    CHECK_THROWS_AS(partial_residual(m, ds, 99, 1, false), InvalidInputError);
}

TEST_CASE("partial residuals vanish on an exactly fitted subtree") {
    auto ds = origin_point();
    SrtModel m(1, 1); // everything zero: predictions equal the response
    CHECK(partial_residual(m, ds, 0, 1, false) == 0.0);
}

TEST_CASE("branch update skips nodes that see no points") {
    Rng rng(41);
    auto ds = random_dataset(rng, 20, 1);
    SrtModel m = SrtModel::random(2, 1, 1.0, rng, 0.5);
    m.omega(0, 0) = 10.0; // root routes everything left
    m.omega(0, 1) = 0.0;
    TrainConfig cfg;
    const auto ws = select_working_set(m.tree, 3);
    auto upd = update_branch_node(m, ds, 3, ws, 0.1, 0.3, 0.4, cfg);
    CHECK(upd.tag == StepKind::SkippedGate);
    REQUIRE(upd.branches == std::vector<int>{3});
    for (std::size_t c = 0; c < 2; ++c)
        CHECK(upd.omega_rows(0, c) == m.omega(m.tree.branch_col(3), c));
}

TEST_CASE("balanced splits take the quasi-Newton branch and do not regress") {
    Rng rng(43);
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(10, 1);
    ds.y.resize(10);
    for (std::size_t i = 0; i < 10; ++i) {
        ds.X(i, 0) = (i < 5 ? -1.0 : 1.0) + 0.1 * rng.uniform01();
        ds.y[i] = i < 5 ? -2.0 : 2.0;
    }
    SrtModel m(1, 1);
    m.omega(0, 1) = -1.0; // routes by sign of -x: 5 left, 5 right (ratio 0.5)
    m.beta(0, 0) = 1.0;
    m.beta(1, 0) = -1.0;
    TrainConfig cfg;
    cfg.depth = 1;
    const auto ws = select_working_set(m.tree, 1);
    auto upd = update_branch_node(m, ds, 1, ws, 0.1, 0.3, 0.4, cfg);
    CHECK(upd.tag == StepKind::HeuristicBalanced);
    CHECK(upd.wlr_points.empty());
    SrtModel cand = m;
    for (std::size_t c = 0; c < 2; ++c) cand.omega(0, c) = upd.omega_rows(0, c);
    CHECK(training_error(cand, ds, 0.0, 0.0) <= training_error(m, ds, 0.0, 0.0) + 1e-12);
}

TEST_CASE("a disabled heuristic forces the balanced branch regardless of imbalance") {
    Rng rng(47);
    auto ds = random_dataset(rng, 10, 1);
    SrtModel m(1, 1);
    m.omega(0, 0) = 3.0; // heavily one-sided routing
    TrainConfig cfg;
    cfg.depth = 1;
    const auto ws = select_working_set(m.tree, 1);
    // eps1 * n = 0.05 * 10 < 1: the imbalance machinery is inert
    auto upd = update_branch_node(m, ds, 1, ws, 0.05, 0.3, 0.4, cfg);
    CHECK(upd.tag == StepKind::HeuristicBalanced);
}

TEST_CASE("moderate imbalance refits the gate on routing labels") {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(10, 1);
    ds.y.resize(10);
    for (std::size_t i = 0; i < 10; ++i) {
        ds.X(i, 0) = static_cast<double>(i); // 0..9
        ds.y[i] = 0.0;
    }
    SrtModel m(1, 1);
    // u = 2.5 - x: rows 0,1,2 go left (ratio 0.3)
    m.omega(0, 0) = 2.5;
    m.omega(0, 1) = -1.0;
    TrainConfig cfg;
    cfg.depth = 1;
    const auto ws = select_working_set(m.tree, 1);
    // eps1 = 0.45 pushes ratio 0.3 out of the balanced band; eps2 = 0.2 keeps
    // it inside the moderate band
    auto upd = update_branch_node(m, ds, 1, ws, 0.45, 0.2, 0.4, cfg);
    CHECK(upd.tag == StepKind::HeuristicWlrModerate);
    CHECK(upd.flipped_points.empty());
    REQUIRE(upd.wlr_points.size() == 10);
    REQUIRE(upd.wlr_labels.size() == 10);
    for (std::size_t k = 0; k < 10; ++k)
        CHECK(upd.wlr_labels[k] == (upd.wlr_points[k] < 3 ? 1.0 : 0.0));
    // balanced class weights: 10/(2*3) left, 10/(2*7) right
    for (std::size_t k = 0; k < 10; ++k)
        CHECK(upd.wlr_class_weights[k] ==
              doctest::Approx(upd.wlr_labels[k] >= 0.5 ? 10.0 / 6.0 : 10.0 / 14.0));
    // the refit gate still separates the same label split but is not frozen
    CHECK((upd.omega_rows(0, 0) != m.omega(0, 0) || upd.omega_rows(0, 1) != m.omega(0, 1)));
}

TEST_CASE("severe imbalance flips the worst-fitted points of the fuller side") {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(10, 1);
    ds.y.resize(10);
    for (std::size_t i = 0; i < 10; ++i) {
        ds.X(i, 0) = static_cast<double>(i);
        // right-routed points get increasingly wrong responses
        ds.y[i] = i < 3 ? 0.0 : static_cast<double>(i) * 10.0;
    }
    SrtModel m(1, 1);
    m.omega(0, 0) = 2.5;
    m.omega(0, 1) = -1.0; // 3 left / 7 right as above
    m.beta(0, 0) = 0.0;
    m.beta(1, 0) = 0.0; // all predictions 0, residual grows with the row index
    TrainConfig cfg;
    cfg.depth = 1;
    const auto ws = select_working_set(m.tree, 1);
    // eps2 = 0.45 empties the moderate band: ratio 0.3 goes to reassignment
    auto upd = update_branch_node(m, ds, 1, ws, 0.45, 0.45, 0.4, cfg);
    CHECK(upd.tag == StepKind::HeuristicWlrReassign);
    // fuller side has 7 points: floor(7 * 0.4) = 2 flips, largest residuals first
    REQUIRE(upd.flipped_points.size() == 2);
    CHECK(upd.flipped_points[0] == 9);
    CHECK(upd.flipped_points[1] == 8);
    // flipped rows now carry the left label
    for (std::size_t k = 0; k < 10; ++k) {
        const bool flipped = upd.wlr_points[k] == 8 || upd.wlr_points[k] == 9;
        const bool orig_left = upd.wlr_points[k] < 3;
        CHECK(upd.wlr_labels[k] == ((orig_left != flipped) ? 1.0 : 0.0));
    }
    // class weights follow the post-flip 5/5 split
    for (double w : upd.wlr_class_weights) CHECK(w == doctest::Approx(1.0));
}

TEST_CASE("reassignment breaks residual ties toward the lowest row index") {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(8, 1);
    ds.y.assign(8, 5.0); // identical responses: identical residuals
    for (std::size_t i = 0; i < 8; ++i) ds.X(i, 0) = 0.0;
    SrtModel m(1, 1);
    m.omega(0, 0) = 1.0; // everything routes left (ratio 1.0: severe)
    TrainConfig cfg;
    cfg.depth = 1;
    const auto ws = select_working_set(m.tree, 1);
    auto upd = update_branch_node(m, ds, 1, ws, 0.45, 0.45, 0.5, cfg);
    CHECK(upd.tag == StepKind::HeuristicWlrReassign);
    // floor(8 * 0.5) = 4 flips; ties resolve to rows 0,1,2,3
    REQUIRE(upd.flipped_points.size() == 4);
    CHECK(upd.flipped_points == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("degenerate refit labels leave the gate untouched") {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(6, 1);
    for (std::size_t i = 0; i < 6; ++i) ds.X(i, 0) = static_cast<double>(i);
    ds.y.assign(6, 1.0);
    SrtModel m(1, 1);
    m.omega(0, 0) = 4.0; // all points left
    m.omega(0, 1) = 0.25;
    TrainConfig cfg;
    cfg.depth = 1;
    const auto ws = select_working_set(m.tree, 1);
    // eps3 tiny: floor(6 * 0.01) = 0 flips, labels stay one-class
    auto upd = update_branch_node(m, ds, 1, ws, 0.45, 0.45, 0.01, cfg);
    CHECK(upd.tag == StepKind::HeuristicWlrReassign);
    CHECK(upd.flipped_points.empty());
    CHECK(upd.wlr_class_weights.empty());
    CHECK(upd.omega_rows(0, 0) == 4.0);
    CHECK(upd.omega_rows(0, 1) == 0.25);
}

TEST_CASE("imbalance refits only touch the working node's gate row") {
    Rng rng(53);
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(16, 1);
    ds.y.resize(16);
    for (std::size_t i = 0; i < 8; ++i) ds.X(i, 0) = -4.0 + 0.5 * static_cast<double>(i);
    for (std::size_t i = 8; i < 16; ++i) ds.X(i, 0) = 1.0 + 0.5 * static_cast<double>(i - 8);
    for (std::size_t i = 0; i < 16; ++i) ds.y[i] = rng.uniform(-1.0, 1.0);
    SrtModel m = SrtModel::random(3, 1, 1.0, rng, 0.25);
    // root sends x < 0 left; node 2's gate u = -6 - 2x puts 2 of those 8 left
    m.omega(m.tree.branch_col(1), 0) = 0.0;
    m.omega(m.tree.branch_col(1), 1) = -5.0;
    m.omega(m.tree.branch_col(2), 0) = -6.0;
    m.omega(m.tree.branch_col(2), 1) = -2.0;
    TrainConfig cfg;
    cfg.depth = 3;
    const auto ws = select_working_set(m.tree, 2);
    REQUIRE(ws.branches == std::vector<int>{2, 4, 5});
    auto upd = update_branch_node(m, ds, 2, ws, 0.45, 0.2, 0.4, cfg);
    CHECK(upd.tag == StepKind::HeuristicWlrModerate);
    REQUIRE(upd.wlr_points.size() == 8);
    // descendant gate rows pass through unchanged
    for (std::size_t b = 1; b < 3; ++b)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(upd.omega_rows(b, c) ==
                  m.omega(m.tree.branch_col(ws.branches[b]), c));
}

TEST_CASE("leaf solve interpolates an affine response under a saturated gate") {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(20, 1);
    ds.y.resize(20);
    for (std::size_t i = 0; i < 20; ++i) {
        ds.X(i, 0) = static_cast<double>(i) / 19.0;
        ds.y[i] = 1.0 + 2.0 * ds.X(i, 0);
    }
    SrtModel m(1, 1);
    m.omega(0, 0) = 50.0; // probability mass pinned to the left leaf
    m.beta(1, 0) = 9.0;   // sentinel on the unreachable leaf
    m.beta(1, 1) = 9.0;
    const std::vector<int> leaves{2, 3};
    ln_step(m, ds, leaves, 0.0);
    CHECK(m.beta(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.beta(0, 1) == doctest::Approx(2.0).epsilon(1e-9));
    // the massless leaf keeps its previous parameters
    CHECK(m.beta(1, 0) == 9.0);
    CHECK(m.beta(1, 1) == 9.0);
}

TEST_CASE("leaf solve equals an independently assembled weighted ridge solve") {
    Rng rng(61);
    auto ds = random_dataset(rng, 40, 2);
    auto m = SrtModel::random(2, 2, 1.0, rng, 1.0);
    const double lb = 0.7;
    SrtModel solved = m;
    const std::vector<int> leaves{4, 5, 6, 7};
    ln_step(solved, ds, leaves, lb);
    for (int leaf : leaves) {
        Mat rows(ds.n(), 3);
        std::vector<double> w(ds.n());
        for (std::size_t i = 0; i < ds.n(); ++i) {
            rows(i, 0) = 1.0;
            rows(i, 1) = ds.X(i, 0);
            rows(i, 2) = ds.X(i, 1);
            w[i] = leaf_probabilities(m, ds.X.row(i))[static_cast<std::size_t>(
                m.tree.leaf_col(leaf))];
        }
        auto c = solve_wls({.rows = &rows,
                            .targets = ds.y,
                            .weights = w,
                            .ridge = static_cast<double>(ds.n()) * lb * 0.5});
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(solved.beta(solved.tree.leaf_col(leaf), j) ==
                  doctest::Approx(c[j]).epsilon(1e-9));
    }
}

TEST_CASE("huge leaf ridge shrinks the leaves toward zero") {
    Rng rng(67);
    auto ds = random_dataset(rng, 25, 1);
    auto m = SrtModel::random(1, 1, 1.0, rng, 1.0);
    ln_step(m, ds, std::vector<int>{2, 3}, 1e12);
    for (std::size_t r = 0; r < m.beta.rows(); ++r)
        for (std::size_t c = 0; c < m.beta.cols(); ++c) CHECK(std::abs(m.beta(r, c)) < 1e-6);
}

TEST_CASE("unregularized leaf solves refuse rank-deficient systems") {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.X = Mat(10, 1, 0.5); // one repeated design point
    ds.y.resize(10);
    for (std::size_t i = 0; i < 10; ++i) ds.y[i] = static_cast<double>(i);
    SrtModel m(1, 1); // neutral gate: both leaves carry mass 5
    const std::vector<int> leaves{2, 3};
    CHECK_THROWS_AS(ln_step(m, ds, leaves, 0.0), SingularSystemError);
    CHECK_NOTHROW(ln_step(m, ds, leaves, 1e-6));
}

TEST_CASE("the imbalance heuristic budget bound matches its formula") {
    CHECK(threshold_bound_kbar(1500, 0.1, 0.8, 2) == 46);
    CHECK(threshold_bound_kbar(1500, 0.1, 0.8, 1) == 23);
    // the bound doubles with each extra level
    for (int d = 1; d <= 5; ++d)
        CHECK(threshold_bound_kbar(1500, 0.1, 0.8, d + 1) ==
              2 * threshold_bound_kbar(1500, 0.1, 0.8, d));
    // too little mass: the heuristic never activates at all
    CHECK(threshold_bound_kbar(5, 0.1, 0.8, 3) == 0);
    CHECK_THROWS_AS(threshold_bound_kbar(100, 0.1, 1.0, 2), InvalidInputError);
    CHECK_THROWS_AS(threshold_bound_kbar(100, 0.1, 0.8, 0), InvalidInputError);
}
