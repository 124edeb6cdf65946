#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "srt/data.hpp"
#include "srt/kernels.hpp"
#include "srt/model.hpp"

namespace srt {

// What a branch-node step ended up doing, recorded per inner iteration.
enum class StepKind {
    SkippedGate,         // block gradient under the gate threshold (or no points)
    ArmijoReference,     // safeguarded gradient step taken
    HeuristicBalanced,   // subtree block minimization (balanced split)
    HeuristicWlrModerate,// gate refit on routing labels (moderate imbalance)
    HeuristicWlrReassign // gate refit after flipping high-residual labels
};

const char* to_string(StepKind k);

struct TrainConfig {
    int depth = 2;
    double mu = 1.0;
    double lambda_omega = 0.0;
    double lambda_beta = 0.0;

    // Imbalance heuristic: initial thresholds and their per-macro-iteration
    // decay.  eps1 = 0 switches the heuristic off entirely (the gate also
    // requires eps1 * N >= 1).
    double eps1 = 0.1;
    double eps2 = 0.3;
    double eps3 = 0.4;
    double zeta = 0.8;

    // Gradient gate bases (step skipped when the block gradient norm is
    // under base^k) and the leaf-step accuracy base.
    double theta_omega = 0.9;
    double theta_beta = 0.9;
    double upsilon = 0.9;

    // Safeguard acceptance: heuristic steps are taken unconditionally while
    // k <= k0; afterwards they must beat the Armijo reference point and
    // decrease the error by tau * |step|^2.  Unset = max_macro_iters * 2^depth
    // (conditions never activate within the budget).
    std::optional<long> k0;
    double tau = 1e-6;

    int max_macro_iters = 10;
    double armijo_a = 1.0;
    double armijo_gamma = 1e-4;
    double armijo_delta = 0.5;

    std::uint64_t seed = 1;
    // Solve the balanced-regime branch subproblem (and rank reassignment
    // residuals) on the subtree restricted to the points routed through it,
    // instead of the full objective.  Cheaper per step, but its fixed points
    // are not stationary for the full objective; off by default.
    bool subtree_proxy = false;
    double term_rel_tol = 1e-7; // macro-iteration relative-improvement stop
    int init_repetitions = 10;  // clustering warm-start repetitions (pipeline)

    long k0_value() const {
        return k0 ? *k0 : static_cast<long>(max_macro_iters) * (1L << depth);
    }

    // Throws InvalidInputError on hard violations; returns human-readable
    // warnings for legal-but-odd settings (e.g. eps1 < eps2, which empties
    // the moderate band).
    std::vector<std::string> validate() const;
};

// Block of variables one inner iteration works on: the branch t with its
// descendant branches, and the leaves below t.  At the root of a tree with
// depth > 1 only the root gate is optimized (no leaves).
struct WorkingSet {
    int node = 0;
    std::vector<int> branches;
    std::vector<int> leaves;
};
WorkingSet select_working_set(const TreeTopology& tree, int t);

// Full training objective: mean weighted squared residual plus the two ridge
// terms over every gate / leaf coefficient (intercepts included).
double training_error(const SrtModel& m, const Dataset& ds, double lambda_omega,
                      double lambda_beta);

// Analytic gradient restricted to the given nodes (branch or leaf ids);
// each entry is the p+1 block for that node, in call order.
struct NodeGrad {
    int node = 0;
    std::vector<double> grad;
};
std::vector<NodeGrad> grad_error(const SrtModel& m, const Dataset& ds, double lambda_omega,
                                 double lambda_beta, std::span<const int> nodes);

// Backtracking step length along the negative block gradient of the full
// objective at the working set's branches: largest a * delta^m satisfying
// the sufficient-decrease inequality.  Throws LineSearchError after 60
// halvings.
double armijo_step(const SrtModel& m, const Dataset& ds, const WorkingSet& ws,
                   const TrainConfig& cfg);

// Weighted logistic loss used by the gate refit:
//   -(1/n) sum_i w_i [c_i ln p_i + (1-c_i) ln(1-p_i)],
// rows already in gate coordinates (1, x/p).
double wlr_objective(const Mat& rows, std::span<const double> labels,
                     std::span<const double> weights, std::span<const double> omega, double mu);

// Balanced class weights n/(2 * class size) from 0/1 labels; throws
// DegenerateWeightsError when one class is empty.
std::vector<double> wlr_weights(std::span<const double> labels);

// Weighted residual mass of data point i over the leaves below t:
// sum_{leaves l under t} P_il (yhat_il - y_i)^2.  With as_root the path
// probability starts at t (subtree restriction), otherwise full-tree.
double partial_residual(const SrtModel& m, const Dataset& ds, std::size_t i, int t,
                        bool as_root);

// Candidate gate update for branch t, chosen by split balance on the
// hard-routed points through t (see StepKind for the regimes).
struct BranchUpdate {
    std::vector<int> branches; // rows below match this order
    Mat omega_rows;            // candidate gate vectors
    StepKind tag = StepKind::SkippedGate;
    // introspection for the WLR regimes (empty otherwise)
    std::vector<std::size_t> wlr_points;
    std::vector<double> wlr_labels;
    std::vector<double> wlr_class_weights;
    std::vector<std::size_t> flipped_points;
};
BranchUpdate update_branch_node(const SrtModel& m, const Dataset& ds, int t,
                                const WorkingSet& ws, double eps1, double eps2, double eps3,
                                const TrainConfig& cfg);

// Exact leaf-block solve: replaces each requested leaf's coefficients with
// the minimizer of the probability-weighted ridge least-squares problem.
// The direct solve meets any requested gradient tolerance (the parameter
// exists for callers tracking an accuracy schedule).  With lambda_beta = 0 a
// rank-deficient leaf system raises SingularSystemError (unreachable leaves
// are left untouched instead).
void ln_step(SrtModel& m, const Dataset& ds, std::span<const int> leaves, double lambda_beta,
             double tolerance = 0.0);

// Inner iterations after which the imbalance heuristic is provably inert
// (the decayed eps1 fails the eps1 * N >= 1 gate): 0 when N * eps1 < 1, else
// ceil(ln(N eps1) / -ln zeta) * 2^(depth-1).
long threshold_bound_kbar(std::size_t n, double eps1, double zeta, int depth);

struct IterRecord {
    long k = 0;       // inner iteration counter, 0-based
    int macro_iter = 0; // 1-based sweep number
    int node = 0;     // branch the step worked on
    StepKind kind = StepKind::SkippedGate;
    double error_after_bn = 0.0; // full objective after the gate update
    double error_after_ln = 0.0; // full objective after the leaf update
    // Leaf-block gradient norm right after the leaf solve; NaN on iterations
    // that took no leaf step (empty leaf set or gate skip).
    double ln_grad_norm = std::numeric_limits<double>::quiet_NaN();
};

struct FitReport {
    std::vector<IterRecord> trace;
    double initial_error = 0.0;
    double best_error = 0.0;
    long iterations = 0;
    int macro_iters = 0;
    double wall_seconds = 0.0;
    double init_db = std::numeric_limits<double>::quiet_NaN(); // clustering-init score
    std::vector<std::string> warnings;
};

// Node-decomposition training: sweeps branch nodes, pairing a safeguarded
// gate update with an exact leaf refit, and returns the best parameters
// seen.  The report's trace carries one record per inner iteration.
SrtModel train(const SrtModel& init, const Dataset& ds, const TrainConfig& cfg,
               FitReport* report = nullptr);

// Baseline: full-gradient Armijo descent over all parameters at once, run
// for max_macro_iters * (branch count) steps or until the gradient is tiny.
SrtModel plain_train(const SrtModel& init, const Dataset& ds, const TrainConfig& cfg,
                     FitReport* report = nullptr);

// Clustering warm start + train, the standard pipeline (report gets the
// chosen Davies-Bouldin score).
struct TrainOutcome {
    SrtModel model;
    FitReport report;
};
TrainOutcome run_training(const Dataset& ds, const TrainConfig& cfg);

} // namespace srt
