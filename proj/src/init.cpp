#include "srt/init.hpp"

#include <cmath>
#include <limits>

#include "srt/numerics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace srt {

HierarchicalSplit recursive_partition(const Mat& X, int depth, Rng& rng) {
    TreeTopology tree(depth);
    if (X.rows() < static_cast<std::size_t>(tree.num_leaves()))
        throw InvalidInputError("recursive_partition: fewer rows than leaves");
    HierarchicalSplit hs;
    hs.node_points.resize(static_cast<std::size_t>(tree.last_leaf()) + 1);
    auto& root = hs.node_points[1];
    root.resize(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) root[i] = i;

    for (int t = 1; t < tree.first_leaf(); ++t) {
        const auto& here = hs.node_points[static_cast<std::size_t>(t)];
        auto& lhs = hs.node_points[static_cast<std::size_t>(TreeTopology::left(t))];
        auto& rhs = hs.node_points[static_cast<std::size_t>(TreeTopology::right(t))];
        if (here.size() < 2) {
            lhs = here;
            hs.degenerate = true;
            continue;
        }
        const auto km = kmeans2(X, rng, here);
        for (std::size_t k = 0; k < here.size(); ++k)
            (km.assign[k] == 0 ? lhs : rhs).push_back(here[k]);
        if (km.degenerate) hs.degenerate = true;
    }
    return hs;
}

double davies_bouldin(const Mat& X, const std::vector<std::vector<std::size_t>>& clusters) {
    std::vector<std::size_t> live;
    for (std::size_t c = 0; c < clusters.size(); ++c)
        if (!clusters[c].empty()) live.push_back(c);
    if (live.size() < 2)
        throw InvalidInputError("davies_bouldin needs at least 2 non-empty clusters");

    const std::size_t dim = X.cols(), k = live.size();
    Mat centroid(k, dim);
    std::vector<double> scatter(k, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
        const auto& pts = clusters[live[a]];
        for (std::size_t i : pts)
            for (std::size_t j = 0; j < dim; ++j) centroid(a, j) += X(i, j);
        for (std::size_t j = 0; j < dim; ++j) centroid(a, j) /= static_cast<double>(pts.size());
        for (std::size_t i : pts) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = X(i, j) - centroid(a, j);
                d2 += d * d;
            }
            scatter[a] += std::sqrt(d2);
        }
        scatter[a] /= static_cast<double>(pts.size());
    }
    double db = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
        double worst = 0.0;
        for (std::size_t b = 0; b < k; ++b) {
            if (a == b) continue;
            double d2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = centroid(a, j) - centroid(b, j);
                d2 += d * d;
            }
            const double sep = std::sqrt(d2);
            const double ratio = sep > 0.0 ? (scatter[a] + scatter[b]) / sep
                                           : std::numeric_limits<double>::infinity();
            worst = std::max(worst, ratio);
        }
        db += worst;
    }
    return db / static_cast<double>(k);
}

namespace {

// Mean response of the parent cluster (walking further up past empty
// ancestors; the root holds every row, so the walk terminates).
double ancestor_mean_response(const Dataset& ds, const HierarchicalSplit& hs, int t) {
    t = TreeTopology::parent(t);
    while (t > 1 && hs.node_points[static_cast<std::size_t>(t)].empty())
        t = TreeTopology::parent(t);
    const auto& pts = hs.node_points[static_cast<std::size_t>(t)];
    double m = 0.0;
    for (std::size_t i : pts) m += ds.y[i];
    return m / static_cast<double>(pts.size());
}

} // namespace

InitResult initialize(const Dataset& ds, int depth, int repetitions, std::uint64_t seed,
                      double mu) {
    if (repetitions < 1) throw InvalidInputError("initialize: repetitions must be >= 1");
    TreeTopology tree(depth);
    if (ds.n() < static_cast<std::size_t>(tree.num_leaves()))
        throw InvalidInputError("initialize: dataset smaller than the leaf count");

    // Run the hierarchical splits; keep the lowest Davies-Bouldin one (ties
    // resolved toward the lowest repetition index, so the pick is stable).
    std::vector<HierarchicalSplit> splits(static_cast<std::size_t>(repetitions));
    std::vector<double> scores(static_cast<std::size_t>(repetitions),
                               std::numeric_limits<double>::infinity());
    Rng base(seed);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int j = 0; j < repetitions; ++j) {
        Rng rep_rng = base.child(static_cast<std::uint64_t>(j));
        auto hs = recursive_partition(ds.X, depth, rep_rng);
        std::vector<std::vector<std::size_t>> leaf_clusters;
        for (int t = tree.first_leaf(); t <= tree.last_leaf(); ++t)
            leaf_clusters.push_back(hs.node_points[static_cast<std::size_t>(t)]);
        double db = std::numeric_limits<double>::infinity();
        try {
            db = davies_bouldin(ds.X, leaf_clusters);
        } catch (const InvalidInputError&) {
            // fewer than 2 populated leaves: keep it as +inf (last resort)
        }
        splits[static_cast<std::size_t>(j)] = std::move(hs);
        scores[static_cast<std::size_t>(j)] = db;
    }
    int best = 0;
    for (int j = 1; j < repetitions; ++j)
        if (scores[static_cast<std::size_t>(j)] < scores[static_cast<std::size_t>(best)]) best = j;

    InitResult out;
    out.repetition = best;
    out.db_score = scores[static_cast<std::size_t>(best)];
    out.split = std::move(splits[static_cast<std::size_t>(best)]);
    out.model = SrtModel(depth, ds.p(), mu);
    const auto& hs = out.split;
    const double inv_p = 1.0 / static_cast<double>(ds.p());

    // Gates: logistic regression separating the two child clusters, fitted in
    // the same averaged coordinates the gate uses (left child = class 1).
    for (int t = 1; t < tree.first_leaf(); ++t) {
        auto w = out.model.omega.row(tree.branch_col(t));
        const auto& lhs = hs.node_points[static_cast<std::size_t>(TreeTopology::left(t))];
        const auto& rhs = hs.node_points[static_cast<std::size_t>(TreeTopology::right(t))];
        if (lhs.empty() || rhs.empty()) {
            // One-sided node: a strong positive intercept keeps routing left.
            w[0] = 4.0 / mu;
            continue;
        }
        Mat rows(lhs.size() + rhs.size(), static_cast<std::size_t>(ds.p()) + 1);
        std::vector<double> labels(rows.rows());
        std::size_t at = 0;
        for (const auto* side : {&lhs, &rhs}) {
            for (std::size_t i : *side) {
                rows(at, 0) = 1.0;
                for (int j = 0; j < ds.p(); ++j)
                    rows(at, static_cast<std::size_t>(j) + 1) = ds.X(i, static_cast<std::size_t>(j)) * inv_p;
                labels[at] = side == &lhs ? 1.0 : 0.0;
                ++at;
            }
        }
        const auto fit = fit_logistic(rows, labels, {}, mu, 1e-8);
        std::copy(fit.coef.begin(), fit.coef.end(), w.begin());
    }

    // Leaves: least squares per cluster; tiny clusters fall back to the
    // ancestor-mean constant.
    for (int t = tree.first_leaf(); t <= tree.last_leaf(); ++t) {
        auto b = out.model.beta.row(tree.leaf_col(t));
        const auto& pts = hs.node_points[static_cast<std::size_t>(t)];
        if (pts.size() < 2) {
            b[0] = ancestor_mean_response(ds, hs, t);
            continue;
        }
        Mat rows(pts.size(), static_cast<std::size_t>(ds.p()) + 1);
        std::vector<double> targets(pts.size());
        for (std::size_t k = 0; k < pts.size(); ++k) {
            rows(k, 0) = 1.0;
            for (int j = 0; j < ds.p(); ++j)
                rows(k, static_cast<std::size_t>(j) + 1) = ds.X(pts[k], static_cast<std::size_t>(j));
            targets[k] = ds.y[pts[k]];
        }
        std::vector<double> coef;
        try {
            coef = solve_wls({.rows = &rows, .targets = targets, .weights = {}, .ridge = 0.0});
        } catch (const SingularSystemError&) {
            coef = solve_wls({.rows = &rows, .targets = targets, .weights = {}, .ridge = 1e-8});
        }
        std::copy(coef.begin(), coef.end(), b.begin());
    }
    return out;
}

} // namespace srt
