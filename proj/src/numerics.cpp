#include "srt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace srt {

bool cholesky_solve(std::vector<double>& A, std::vector<double>& b, std::size_t n,
                    double pivot_tol) {
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(A[i * n + i]));
    const double floor = std::max(pivot_tol * max_diag, 0.0);

    // Lower-triangular factor written over A.
    for (std::size_t j = 0; j < n; ++j) {
        double d = A[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
        if (!(d > floor) || !std::isfinite(d)) return false;
        const double ljj = std::sqrt(d);
        A[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
            A[i * n + j] = s / ljj;
        }
    }
    // Forward then backward substitution.
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= A[i * n + k] * b[k];
        b[i] = s / A[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= A[k * n + ii] * b[k];
        b[ii] = s / A[ii * n + ii];
    }
    return true;
}

std::vector<double> solve_wls(const WlsProblem& p) {
    const Mat& X = *p.rows;
    const std::size_t n = X.rows(), d = X.cols();
    if (p.targets.size() != n)
        throw InvalidInputError("solve_wls: row/target count mismatch");
    if (!p.weights.empty() && p.weights.size() != n)
        throw InvalidInputError("solve_wls: row/weight count mismatch");
    if (p.ridge < 0.0) throw InvalidInputError("solve_wls: negative ridge");

    std::vector<double> A(d * d, 0.0), rhs(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = p.weights.empty() ? 1.0 : p.weights[i];
        auto xi = X.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            const double wxa = w * xi[a];
            rhs[a] += wxa * p.targets[i];
            for (std::size_t b = a; b < d; ++b) A[a * d + b] += wxa * xi[b];
        }
    }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < a; ++b) A[a * d + b] = A[b * d + a];
    for (std::size_t a = 0; a < d; ++a) A[a * d + a] += p.ridge;

    std::vector<double> Awork = A, sol = rhs;
    if (cholesky_solve(Awork, sol, d)) return sol;

    if (p.ridge == 0.0)
        throw SingularSystemError(
            "solve_wls: normal equations are rank-deficient; use a positive ridge");

    // Regularized but numerically stalled: nudge the diagonal once and retry.
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) trace += A[a * d + a];
    const double jitter = 1e-10 * (trace / static_cast<double>(d) + 1.0);
    Awork = A;
    sol = rhs;
    for (std::size_t a = 0; a < d; ++a) Awork[a * d + a] += jitter;
    if (cholesky_solve(Awork, sol, d)) return sol;
    throw SingularSystemError("solve_wls: factorization failed even with jitter");
}

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

LogisticResult fit_logistic(const Mat& rows, std::span<const double> labels,
                            std::span<const double> weights, double mu, double ridge,
                            int max_iter, std::span<const double> warm_start) {
    const std::size_t n = rows.rows(), d = rows.cols();
    if (labels.size() != n) throw InvalidInputError("fit_logistic: row/label count mismatch");
    if (!weights.empty() && weights.size() != n)
        throw InvalidInputError("fit_logistic: row/weight count mismatch");
    if (n == 0) throw InvalidInputError("fit_logistic: empty input");

    bool has0 = false, has1 = false;
    for (double c : labels) (c >= 0.5 ? has1 : has0) = true;
    if (!has0 || !has1)
        throw InvalidInputError("fit_logistic: labels contain a single class");

    const double inv_n = 1.0 / static_cast<double>(n);
    auto loss_at = [&](std::span<const double> coef) {
        double L = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weights.empty() ? 1.0 : weights[i];
            const double z = mu * dot(rows.row(i), coef);
            // ln p = -ln(1+e^-z) and ln(1-p) = -z - ln(1+e^-z), evaluated stably.
            const double ln_p = z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
            const double ln_q = z >= 0.0 ? -z - std::log1p(std::exp(-z)) : -std::log1p(std::exp(z));
            L -= w * (labels[i] >= 0.5 ? ln_p : ln_q);
        }
        return L * inv_n + 0.5 * ridge * norm2sq(coef);
    };

    std::vector<double> coef(d, 0.0);
    if (!warm_start.empty()) {
        if (warm_start.size() != d) throw InvalidInputError("fit_logistic: warm start size mismatch");
        coef.assign(warm_start.begin(), warm_start.end());
    }

    std::vector<double> grad(d), step(d), H(d * d);
    double f = loss_at(coef);
    double best_f = f;
    std::vector<double> best_coef = coef;
    double best_gn = std::numeric_limits<double>::infinity();

    int it = 0;
    for (; it < max_iter; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        std::fill(H.begin(), H.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weights.empty() ? 1.0 : weights[i];
            auto xi = rows.row(i);
            const double pi = stable_sigmoid(mu * dot(xi, coef));
            const double g = -w * mu * (labels[i] - pi) * inv_n;
            const double h = w * mu * mu * pi * (1.0 - pi) * inv_n;
            for (std::size_t a = 0; a < d; ++a) {
                grad[a] += g * xi[a];
                for (std::size_t b = a; b < d; ++b) H[a * d + b] += h * xi[a] * xi[b];
            }
        }
        for (std::size_t a = 0; a < d; ++a) {
            grad[a] += ridge * coef[a];
            for (std::size_t b = 0; b < a; ++b) H[a * d + b] = H[b * d + a];
            H[a * d + a] += ridge;
        }
        const double gn = norm2(grad);
        if (gn < best_gn) {
            best_gn = gn;
            best_f = f;
            best_coef = coef;
        }
        if (gn < 1e-7) return {coef, true, gn, it};

        // Newton direction with a diagonal boost if the Hessian is too flat.
        std::vector<double> Hw = H;
        step = grad;
        if (!cholesky_solve(Hw, step, d)) {
            Hw = H;
            step = grad;
            double tr = 0.0;
            for (std::size_t a = 0; a < d; ++a) tr += H[a * d + a];
            const double boost = 1e-8 * (tr / static_cast<double>(d) + 1.0);
            for (std::size_t a = 0; a < d; ++a) Hw[a * d + a] += boost;
            if (!cholesky_solve(Hw, step, d)) step = grad; // fall back to gradient
        }

        // Damped update: halve until the loss decreases.
        double t = 1.0;
        bool moved = false;
        std::vector<double> trial(d);
        for (int half = 0; half < 40; ++half) {
            for (std::size_t a = 0; a < d; ++a) trial[a] = coef[a] - t * step[a];
            const double ft = loss_at(trial);
            if (ft < f) {
                coef.swap(trial);
                f = ft;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) break; // stuck (e.g. separable data at the precision limit)
    }
    (void)best_f;
    return {best_coef, false, best_gn, it};
}

KMeans2Result kmeans2(const Mat& points, Rng& rng, std::span<const std::size_t> subset,
                      int max_iter) {
    std::vector<std::size_t> idx;
    if (subset.empty()) {
        idx.resize(points.rows());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    } else {
        idx.assign(subset.begin(), subset.end());
    }
    const std::size_t n = idx.size(), dim = points.cols();
    if (n == 0) throw InvalidInputError("kmeans2: empty point set");

    auto sqdist = [&](std::size_t i, std::span<const double> c) {
        double s = 0.0;
        auto xi = points.row(i);
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = xi[j] - c[j];
            s += d * d;
        }
        return s;
    };

    KMeans2Result res;
    res.centroids = Mat(2, dim);
    res.assign.assign(n, 0);

    // k-means++ seeding: first centre uniform, second proportional to the
    // squared distance from the first.
    const std::size_t first = idx[rng.below(n)];
    for (std::size_t j = 0; j < dim; ++j) res.centroids(0, j) = points(first, j);
    std::vector<double> d2(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        d2[k] = sqdist(idx[k], res.centroids.row(0));
        total += d2[k];
    }
    if (total <= 0.0) {
        // All points coincide: second cluster stays empty.
        for (std::size_t j = 0; j < dim; ++j) res.centroids(1, j) = res.centroids(0, j);
        res.degenerate = true;
        res.wcss = 0.0;
        return res;
    }
    double pick = rng.uniform01() * total;
    std::size_t second = n - 1;
    for (std::size_t k = 0; k < n; ++k) {
        pick -= d2[k];
        if (pick <= 0.0) {
            second = k;
            break;
        }
    }
    for (std::size_t j = 0; j < dim; ++j) res.centroids(1, j) = points(idx[second], j);

    std::vector<double> sum(2 * dim);
    std::size_t cnt[2];
    for (int sweep = 0; sweep < max_iter; ++sweep) {
        bool changed = false;
        for (std::size_t k = 0; k < n; ++k) {
            const double da = sqdist(idx[k], res.centroids.row(0));
            const double db = sqdist(idx[k], res.centroids.row(1));
            const int a = db < da ? 1 : 0; // ties stay with the first centre
            if (a != res.assign[k]) {
                res.assign[k] = a;
                changed = true;
            }
        }
        if (!changed && sweep > 0) break;
        std::fill(sum.begin(), sum.end(), 0.0);
        cnt[0] = cnt[1] = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const int a = res.assign[k];
            ++cnt[a];
            auto xi = points.row(idx[k]);
            for (std::size_t j = 0; j < dim; ++j) sum[a * dim + j] += xi[j];
        }
        for (int c = 0; c < 2; ++c) {
            if (cnt[c] == 0) continue; // keep the stale centre
            for (std::size_t j = 0; j < dim; ++j)
                res.centroids(c, j) = sum[c * dim + j] / static_cast<double>(cnt[c]);
        }
        if (!changed) break;
    }

    res.degenerate = false;
    std::size_t n0 = 0;
    for (std::size_t k = 0; k < n; ++k) n0 += res.assign[k] == 0 ? 1 : 0;
    if (n0 == 0 || n0 == n) res.degenerate = true;
    res.wcss = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        res.wcss += sqdist(idx[k], res.centroids.row(res.assign[k]));
    return res;
}

double armijo_backtrack(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, std::span<const double> dir,
                        double f0, double dir_deriv, double a, double gamma, double delta,
                        int max_halvings) {
    if (!(a > 0.0) || !(delta > 0.0 && delta < 1.0) || !(gamma > 0.0 && gamma < 1.0))
        throw InvalidInputError("armijo_backtrack: need a > 0, delta in (0,1), gamma in (0,1)");
    std::vector<double> trial(x.begin(), x.end());
    double alpha = a;
    for (int m = 0; m <= max_halvings; ++m) {
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = x[i] + alpha * dir[i];
        if (f(trial) <= f0 + gamma * alpha * dir_deriv) return alpha;
        alpha *= delta;
    }
    throw LineSearchError("armijo_backtrack: no sufficient decrease after " +
                          std::to_string(max_halvings) + " halvings");
}

double lbfgs_minimize(
    const std::function<double(std::span<const double>, std::span<double>)>& fg,
    std::vector<double>& x, const LbfgsOptions& opt) {
    const std::size_t d = x.size();
    std::vector<double> g(d), dir(d);
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;

    double f = fg(x, g);
    auto value_only = [&](std::span<const double> p) {
        static thread_local std::vector<double> scratch;
        scratch.assign(d, 0.0);
        return fg(p, scratch);
    };

    for (int it = 0; it < opt.max_iter; ++it) {
        if (norm2(g) <= opt.grad_tol) break;

        // Two-loop recursion.
        for (std::size_t i = 0; i < d; ++i) dir[i] = -g[i];
        std::vector<double> alpha_v(s_hist.size());
        for (std::size_t h = s_hist.size(); h-- > 0;) {
            alpha_v[h] = rho_hist[h] * dot(s_hist[h], dir);
            for (std::size_t i = 0; i < d; ++i) dir[i] -= alpha_v[h] * y_hist[h][i];
        }
        if (!s_hist.empty()) {
            const double ys = dot(y_hist.back(), s_hist.back());
            const double yy = norm2sq(y_hist.back());
            const double scale = ys / std::max(yy, 1e-300);
            for (std::size_t i = 0; i < d; ++i) dir[i] *= scale;
        }
        for (std::size_t h = 0; h < s_hist.size(); ++h) {
            const double beta = rho_hist[h] * dot(y_hist[h], dir);
            for (std::size_t i = 0; i < d; ++i) dir[i] += (alpha_v[h] - beta) * s_hist[h][i];
        }
        double dd = dot(g, dir);
        if (!(dd < 0.0)) { // curvature went bad; restart from steepest descent
            for (std::size_t i = 0; i < d; ++i) dir[i] = -g[i];
            dd = -norm2sq(g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        double alpha;
        try {
            alpha = armijo_backtrack(value_only, x, dir, f, dd, opt.a, opt.gamma, opt.delta);
        } catch (const LineSearchError&) {
            break; // no improvement possible at this precision
        }

        std::vector<double> x_new(d), g_new(d);
        for (std::size_t i = 0; i < d; ++i) x_new[i] = x[i] + alpha * dir[i];
        const double f_new = fg(x_new, g_new);

        std::vector<double> s(d), yv(d);
        for (std::size_t i = 0; i < d; ++i) {
            s[i] = x_new[i] - x[i];
            yv[i] = g_new[i] - g[i];
        }
        const double ys = dot(yv, s);
        if (ys > 1e-12 * norm2(yv) * norm2(s) && ys > 0.0) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / ys);
            if (static_cast<int>(s_hist.size()) > opt.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
    }
    return f;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
    std::vector<double> p(x.begin(), x.end()), g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double save = p[i];
        p[i] = save + h;
        const double fp = f(p);
        p[i] = save - h;
        const double fm = f(p);
        p[i] = save;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

} // namespace srt
