#pragma once

#include <functional>
#include <vector>

#include "srt/common.hpp"

namespace srt {

// ---------------------------------------------------------------------------
// Dense symmetric solves
// ---------------------------------------------------------------------------

// In-place Cholesky solve of A x = b for symmetric positive definite A
// (row-major n*n).  Returns false if a pivot falls below tol * max diagonal.
bool cholesky_solve(std::vector<double>& A, std::vector<double>& b, std::size_t n,
                    double pivot_tol = 1e-13);

struct WlsProblem {
    const Mat* rows = nullptr;              // n x d design matrix
    std::span<const double> targets;        // n
    std::span<const double> weights;        // n (empty -> all ones)
    double ridge = 0.0;                     // adds ridge * I to the normal matrix
};

// Weighted ridge least squares via normal equations + Cholesky:
//   (X^T W X + ridge I) c = X^T W y.
// ridge > 0 gets one jitter retry (1e-10-scaled) if the factorization stalls;
// ridge == 0 raises SingularSystemError instead, advising regularization.
std::vector<double> solve_wls(const WlsProblem& p);

// ---------------------------------------------------------------------------
// Weighted logistic regression
// ---------------------------------------------------------------------------

struct LogisticResult {
    std::vector<double> coef;
    bool converged = false;
    double grad_norm = 0.0;
    int iterations = 0;
};

// Minimizes  -(1/n) sum_i w_i [c_i ln p_i + (1-c_i) ln(1-p_i)] + (ridge/2)|w|^2
// with p_i = 1/(1+exp(-mu * rows_i . coef)), by damped Newton (IRLS).
// Stops when the gradient norm drops below 1e-7 or after max_iter steps; a
// non-converged run returns the best iterate with converged=false.
// Labels must contain both classes.
LogisticResult fit_logistic(const Mat& rows, std::span<const double> labels,
                            std::span<const double> weights, double mu, double ridge,
                            int max_iter = 50, std::span<const double> warm_start = {});

// ---------------------------------------------------------------------------
// Two-means clustering
// ---------------------------------------------------------------------------

struct KMeans2Result {
    std::vector<int> assign;            // 0 or 1 per point
    Mat centroids;                      // 2 x dim
    double wcss = 0.0;                  // within-cluster sum of squares
    bool degenerate = false;            // one cluster ended up empty
};

// Lloyd's algorithm with k-means++ seeding, K = 2, at most max_iter sweeps.
// points is n x dim; optional subset restricts to those row indices.
KMeans2Result kmeans2(const Mat& points, Rng& rng, std::span<const std::size_t> subset = {},
                      int max_iter = 100);

// ---------------------------------------------------------------------------
// Generic minimization helpers
// ---------------------------------------------------------------------------

// Backtracking line search: returns the largest alpha = a * delta^m, m >= 0,
// with f(x + alpha d) <= f0 + gamma * alpha * dir_deriv  (dir_deriv = g.d < 0).
// Throws LineSearchError after max_halvings trials without success.
double armijo_backtrack(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, std::span<const double> dir,
                        double f0, double dir_deriv, double a, double gamma, double delta,
                        int max_halvings = 60);

struct LbfgsOptions {
    int max_iter = 30;
    int memory = 5;
    double grad_tol = 1e-8;
    double a = 1.0, gamma = 1e-4, delta = 0.5;
};

// Limited-memory BFGS with Armijo backtracking.  fg must write the gradient
// into grad and return the objective.  Minimizes in place; returns final f.
double lbfgs_minimize(
    const std::function<double(std::span<const double>, std::span<double>)>& fg,
    std::vector<double>& x, const LbfgsOptions& opt = {});

// Central finite-difference gradient of f at x with step h (oracle used to
// validate the analytic gradients; also handy for ad-hoc checks).
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h = 1e-6);

} // namespace srt
