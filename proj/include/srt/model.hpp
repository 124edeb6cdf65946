#pragma once

#include <cmath>
#include <vector>

#include "srt/common.hpp"
#include "srt/tree.hpp"

namespace srt {

// Logistic gate 1/(1+exp(-mu*u)), numerically stable and clamped to stay
// strictly inside (0,1) so downstream products and logs remain finite.
inline double sigmoid_prob(double mu, double u) {
    const double z = mu * u;
    double p;
    if (z >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    constexpr double lo = 1e-15;
    if (p < lo) p = lo;
    if (p > 1.0 - lo) p = 1.0 - lo;
    return p;
}

// Soft regression tree: every branch node t holds a gate vector omega_t, and
// every leaf holds an affine regressor beta_t.  Branch activations average
// the feature contribution (u = w0 + (1/p) sum_j w_j x_j); leaf predictions
// are plain affine (beta_0 + sum_j beta_j x_j).
struct SrtModel {
    TreeTopology tree{1};
    int num_features = 0;
    double mu = 1.0;
    Mat omega; // num_branch x (p+1); row tree.branch_col(t) belongs to branch t
    Mat beta;  // num_leaves x (p+1); row tree.leaf_col(t) belongs to leaf t

    SrtModel() = default;
    SrtModel(int depth, int p, double mu_ = 1.0)
        : tree(depth), num_features(p), mu(mu_),
          omega(static_cast<std::size_t>(tree.num_branch()), static_cast<std::size_t>(p) + 1),
          beta(static_cast<std::size_t>(tree.num_leaves()), static_cast<std::size_t>(p) + 1) {
        if (p < 1) throw InvalidInputError("model needs at least one feature");
        if (!(mu_ > 0.0)) throw InvalidInputError("mu must be positive");
    }

    // Gate input u_t = w0 + (1/p) * sum_j w_j x_j.
    double gate_input(int t, std::span<const double> x) const {
        auto w = omega.row(tree.branch_col(t));
        double s = 0.0;
        for (int j = 0; j < num_features; ++j) s += w[j + 1] * x[j];
        return w[0] + s / static_cast<double>(num_features);
    }

    // Leaf output beta_0 + sum_j beta_j x_j (no feature averaging here).
    double leaf_output(int t, std::span<const double> x) const {
        auto b = beta.row(tree.leaf_col(t));
        double s = b[0];
        for (int j = 0; j < num_features; ++j) s += b[j + 1] * x[j];
        return s;
    }

    // Uniformly random parameters, for benchmark baselines and tests.
    static SrtModel random(int depth, int p, double mu, Rng& rng, double scale = 1.0) {
        SrtModel m(depth, p, mu);
        for (std::size_t i = 0; i < m.omega.size(); ++i)
            m.omega.data()[i] = rng.uniform(-scale, scale);
        for (std::size_t i = 0; i < m.beta.size(); ++i)
            m.beta.data()[i] = rng.uniform(-scale, scale);
        return m;
    }
};

// Probability of routing left at branch t.  Rejects non-finite features.
double branch_probability(const SrtModel& m, int t, std::span<const double> x);

// Soft path probability of every leaf (heap order), summing to 1.  Uses
// log-space accumulation for deep trees to dodge underflow.
std::vector<double> leaf_probabilities(const SrtModel& m, std::span<const double> x);

// Hard-routing root-to-leaf node sequence: go left iff the branch probability
// is >= 0.5 (ties left).  The last element is the prediction leaf.
std::vector<int> hbp_path(const SrtModel& m, std::span<const double> x);

// Leaf index reached by hard routing (last element of hbp_path, cheaper).
int hbp_leaf(const SrtModel& m, std::span<const double> x);

// Single-leaf prediction: the affine output of the hard-routed leaf.
double predict(const SrtModel& m, std::span<const double> x);

} // namespace srt
