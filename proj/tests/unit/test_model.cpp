#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "srt/model.hpp"

using namespace srt;

namespace {
double logit(double p) { return std::log(p / (1.0 - p)); }
} // namespace

TEST_CASE("sigmoid gate hits 0.5 at zero input for any slope") {
    for (double mu : {0.1, 1.0, 7.5, 100.0}) CHECK(sigmoid_prob(mu, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("sigmoid gate stays strictly inside (0,1)") {
    CHECK(sigmoid_prob(1.0, 1e6) == 1.0 - 1e-15);
    CHECK(sigmoid_prob(1.0, -1e6) == 1e-15);
    CHECK(sigmoid_prob(50.0, 700.0) == 1.0 - 1e-15);
}

TEST_CASE("gate input averages the feature contribution") {
    // one feature: u = w0 + w1 * x, so w = (0, ln 3) at x = 1 routes left with 3/4
    SrtModel m(1, 1);
    m.omega(0, 0) = 0.0;
    m.omega(0, 1) = std::log(3.0);
    const std::vector<double> x{1.0};
    CHECK(m.gate_input(1, x) == doctest::Approx(std::log(3.0)));
    CHECK(branch_probability(m, 1, x) == doctest::Approx(0.75));
}

TEST_CASE("gate input and slope combine as sigmoid(mu * u)") {
    SrtModel m(1, 2, 2.0);
    m.omega(0, 0) = 0.1;
    m.omega(0, 1) = 0.2;
    m.omega(0, 2) = -0.4;
    const std::vector<double> x{0.5, 0.25};
    // u = 0.1 + (0.2*0.5 - 0.4*0.25) / 2 = 0.1
    CHECK(m.gate_input(1, x) == doctest::Approx(0.1));
    CHECK(branch_probability(m, 1, x) == doctest::Approx(1.0 / (1.0 + std::exp(-0.2))));
}

TEST_CASE("non-finite features are rejected") {
    SrtModel m(1, 2);
    const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
    const std::vector<double> inf{std::numeric_limits<double>::infinity(), 0.0};
    const std::vector<double> short_x{1.0};
    CHECK_THROWS_AS(branch_probability(m, 1, bad), InvalidInputError);
    CHECK_THROWS_AS(predict(m, inf), InvalidInputError);
    CHECK_THROWS_AS(predict(m, short_x), InvalidInputError);
}

TEST_CASE("model construction validates feature count and slope") {
    CHECK_THROWS_AS(SrtModel(1, 0), InvalidInputError);
    CHECK_THROWS_AS(SrtModel(1, 2, 0.0), InvalidInputError);
    CHECK_THROWS_AS(SrtModel(1, 2, -1.0), InvalidInputError);
}

TEST_CASE("depth-1 leaf probabilities are the gate and its complement") {
    SrtModel m(1, 1);
    m.omega(0, 0) = logit(0.7);
    const std::vector<double> x{0.0};
    auto probs = leaf_probabilities(m, x);
    REQUIRE(probs.size() == 2);
    CHECK(probs[0] == doctest::Approx(0.7));
    CHECK(probs[1] == doctest::Approx(0.3));
}

TEST_CASE("neutral gates spread a depth-2 tree evenly") {
    SrtModel m(2, 3);
    const std::vector<double> x{0.3, -0.2, 1.4};
    auto probs = leaf_probabilities(m, x);
    REQUIRE(probs.size() == 4);
    for (double p : probs) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("leaf probabilities multiply down the path") {
    SrtModel m(2, 1);
    m.omega(m.tree.branch_col(1), 0) = logit(0.9);
    m.omega(m.tree.branch_col(2), 0) = logit(0.8);
    m.omega(m.tree.branch_col(3), 0) = logit(0.1);
    const std::vector<double> x{0.0};
    auto probs = leaf_probabilities(m, x);
    REQUIRE(probs.size() == 4);
    CHECK(probs[0] == doctest::Approx(0.72)); // 0.9 * 0.8
    CHECK(probs[1] == doctest::Approx(0.18)); // 0.9 * 0.2
    CHECK(probs[2] == doctest::Approx(0.01)); // 0.1 * 0.1
    CHECK(probs[3] == doctest::Approx(0.09)); // 0.1 * 0.9
}

TEST_CASE("leaf probabilities are a strictly positive partition of one") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const int depth = 1 + static_cast<int>(rng.below(3));
        const int p = 1 + static_cast<int>(rng.below(4));
        auto m = SrtModel::random(depth, p, 0.5 + rng.uniform01() * 3.0, rng, 5.0);
        std::vector<double> x(static_cast<std::size_t>(p));
        for (auto& v : x) v = rng.uniform(-10.0, 10.0);
        auto probs = leaf_probabilities(m, x);
        double sum = 0.0;
        for (double q : probs) {
            CHECK(q > 0.0);
            sum += q;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("deep trees keep the partition property via log accumulation") {
    Rng rng(7);
    auto m = SrtModel::random(8, 2, 1.0, rng, 6.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> x{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
        auto probs = leaf_probabilities(m, x);
        REQUIRE(probs.size() == 256);
        const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        // cross-check one leaf against the direct gate product
        const int leaf = m.tree.first_leaf() + static_cast<int>(rng.below(256));
        double direct = 1.0;
        for (auto [branch, went_left] : m.tree.ancestors(leaf)) {
            const double g = branch_probability(m, branch, x);
            direct *= went_left ? g : 1.0 - g;
        }
        CHECK(probs[static_cast<std::size_t>(m.tree.leaf_col(leaf))] ==
              doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("highest-branching-probability routing follows gate majorities") {
    SrtModel m(3, 1);
    for (int b = 1; b <= m.tree.num_branch(); ++b) m.omega(m.tree.branch_col(b), 0) = 2.0;
    const std::vector<double> x{0.0};
    CHECK(hbp_leaf(m, x) == m.tree.first_leaf());
    CHECK(hbp_path(m, x) == std::vector<int>{1, 2, 4, 8});
}

TEST_CASE("exact half probabilities route left") {
    for (int depth : {1, 2, 3}) {
        SrtModel m(depth, 2); // all-zero gates: every probability is exactly 0.5
        const std::vector<double> x{0.4, -1.0};
        CHECK(hbp_leaf(m, x) == m.tree.first_leaf());
    }
}

TEST_CASE("routing turns on each gate independently") {
    SrtModel m(2, 1);
    m.omega(m.tree.branch_col(1), 0) = logit(0.4); // right
    m.omega(m.tree.branch_col(2), 0) = -5.0;       // unused on this path
    m.omega(m.tree.branch_col(3), 0) = logit(0.6); // left
    const std::vector<double> x{0.0};
    CHECK(hbp_path(m, x) == std::vector<int>{1, 3, 6});
    CHECK(hbp_leaf(m, x) == 6);
}

TEST_CASE("routing is invariant under positive gate rescaling") {
    Rng rng(11);
    auto m = SrtModel::random(3, 2, 1.0, rng, 2.0);
    auto scaled = m;
    for (std::size_t r = 0; r < scaled.omega.rows(); ++r)
        for (std::size_t c = 0; c < scaled.omega.cols(); ++c) scaled.omega(r, c) *= 3.7;
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> x{rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)};
        CHECK(hbp_leaf(m, x) == hbp_leaf(scaled, x));
    }
}

TEST_CASE("prediction reads the routed leaf's affine model") {
    SrtModel m(1, 1);
    m.omega(0, 0) = 1.0; // routes left
    m.beta(0, 0) = 1.0;
    m.beta(0, 1) = 2.0;
    m.beta(1, 0) = -50.0;
    const std::vector<double> x{0.5};
    CHECK(predict(m, x) == doctest::Approx(2.0));
}

TEST_CASE("constant leaves predict the constant everywhere") {
    SrtModel m(2, 3);
    Rng rng(3);
    for (std::size_t r = 0; r < m.omega.rows(); ++r)
        for (std::size_t c = 0; c < m.omega.cols(); ++c) m.omega(r, c) = rng.uniform(-2.0, 2.0);
    for (std::size_t r = 0; r < m.beta.rows(); ++r) m.beta(r, 0) = 13.25;
    for (int trial = 0; trial < 25; ++trial) {
        const std::vector<double> x{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                                    rng.uniform(-3.0, 3.0)};
        CHECK(predict(m, x) == doctest::Approx(13.25));
    }
}

TEST_CASE("prediction equals the routed leaf output on random models") {
    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const int depth = 1 + static_cast<int>(rng.below(3));
        const int p = 1 + static_cast<int>(rng.below(3));
        auto m = SrtModel::random(depth, p, 1.0, rng, 3.0);
        std::vector<double> x(static_cast<std::size_t>(p));
        for (auto& v : x) v = rng.uniform(-2.0, 2.0);
        CHECK(predict(m, x) == m.leaf_output(hbp_leaf(m, x), x));
    }
}
