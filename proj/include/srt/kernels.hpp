#pragma once

#include <vector>

#include "srt/model.hpp"

namespace srt::kernels {

// Execution policy for the data-parallel kernels.
//  Serial   - single plain loop, the reference implementation.
//  Parallel - fixed-size chunks reduced in chunk order; OpenMP-accelerated
//             when available, but the summation tree never depends on the
//             thread count, so results are bit-identical across machines,
//             thread counts, and OpenMP-less builds.
enum class Exec { Serial, Parallel };

// What a kernel call covers.  `root` selects the subtree whose leaves
// contribute; with `as_root` the path probability starts at `root` (ancestor
// gates dropped), otherwise the full root-to-leaf products are used.
// `points` restricts to a set of row indices (empty means every row).
struct Scope {
    int root = 1;
    bool as_root = false;
    std::span<const std::size_t> points = {};
};

// sum_i sum_{t in leaves(scope)} P_it (yhat_it - y_i)^2; no normalization or
// ridge terms (callers add those).
double error_sum(const SrtModel& m, const Mat& X, std::span<const double> y,
                 const Scope& scope, Exec exec);

struct GradSums {
    double err = 0.0;
    Mat g_omega; // d(err)/d(omega), rows matching model.omega (scope branches only)
    Mat g_beta;  // d(err)/d(beta), rows matching model.beta (scope leaves only)
};

// Error sum and its gradient w.r.t. the gate and leaf parameters inside the
// scope's subtree, in one pass.
GradSums error_and_grad_sums(const SrtModel& m, const Mat& X, std::span<const double> y,
                             const Scope& scope, Exec exec);

// Hard-routing leaf index for every row of X.
std::vector<int> route_all(const SrtModel& m, const Mat& X, Exec exec);

// Per-point weighted residual mass sum_{t in leaves(scope)} P_it (yhat-y)^2,
// one value per scope point (reassignment ranking).
std::vector<double> point_residuals(const SrtModel& m, const Mat& X, std::span<const double> y,
                                    const Scope& scope, Exec exec);

// Weighted normal-equation blocks for a set of leaves: for each requested
// leaf t,  A_t = sum_i P_it x~_i x~_i^T  and  b_t = sum_i P_it y_i x~_i  with
// x~ = (1, x), plus the total probability mass reaching the leaf.
struct LeafSystems {
    std::vector<int> leaves;
    std::vector<std::vector<double>> A; // (p+1)^2 row-major each
    std::vector<std::vector<double>> b; // (p+1) each
    std::vector<double> mass;
};
LeafSystems leaf_systems(const SrtModel& m, const Mat& X, std::span<const double> y,
                         const Scope& scope, std::span<const int> leaves, Exec exec);

} // namespace srt::kernels
