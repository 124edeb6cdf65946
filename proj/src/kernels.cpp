#include "srt/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace srt::kernels {

namespace {

constexpr std::size_t kChunk = 512; // fixed reduction granularity (determinism)

// Per-call constants derived from a Scope.
struct Plan {
    int root = 1;
    bool as_root = false;
    std::vector<std::pair<int, bool>> anc; // (ancestor branch, went_left)
    std::vector<int> branches;             // subtree branches, parents first
    int leaf_lo = 0, leaf_hi = 0;
    std::size_t n = 0;                     // number of points in scope
    const std::size_t* idx = nullptr;      // row indices, null = identity
};

Plan make_plan(const SrtModel& m, const Mat& X, const Scope& scope) {
    Plan pl;
    if (!m.tree.valid_node(scope.root))
        throw InvalidInputError("kernel scope root " + std::to_string(scope.root) +
                                " is not a node of the tree");
    pl.root = scope.root;
    pl.as_root = scope.as_root;
    if (!pl.as_root && pl.root != 1) pl.anc = m.tree.ancestors(pl.root);
    if (!m.tree.is_leaf(pl.root)) pl.branches = m.tree.subtree_branches(pl.root);
    auto [lo, hi] = m.tree.leaf_range(pl.root);
    pl.leaf_lo = lo;
    pl.leaf_hi = hi;
    if (scope.points.empty()) {
        pl.n = X.rows();
        pl.idx = nullptr;
    } else {
        pl.n = scope.points.size();
        pl.idx = scope.points.data();
    }
    return pl;
}

struct Scratch {
    std::vector<double> p, path, w;
    explicit Scratch(const TreeTopology& tree)
        : p(tree.last_leaf() + 1), path(tree.last_leaf() + 1), w(tree.last_leaf() + 1) {}
};

// Residual mass of one point: fills path probabilities (and, with grads, the
// per-node weighted residual sums) in the scratch; returns the point's error.
template <bool WithGrad>
double eval_point(const SrtModel& m, const Mat& X, const double* y, const Plan& pl,
                  std::size_t row, Scratch& s, Mat* gw, Mat* gb) {
    auto x = X.row(row);
    double start = 1.0;
    for (auto [a, went_left] : pl.anc) {
        const double pa = sigmoid_prob(m.mu, m.gate_input(a, x));
        start *= went_left ? pa : 1.0 - pa;
    }
    s.path[pl.root] = start;
    for (int t : pl.branches) {
        const double pt = sigmoid_prob(m.mu, m.gate_input(t, x));
        s.p[t] = pt;
        s.path[2 * t] = s.path[t] * pt;
        s.path[2 * t + 1] = s.path[t] * (1.0 - pt);
    }
    double err = 0.0;
    for (int t = pl.leaf_lo; t <= pl.leaf_hi; ++t) {
        const double r = m.leaf_output(t, x) - y[row];
        const double wr = s.path[t] * r * r;
        err += wr;
        if constexpr (WithGrad) {
            s.w[t] = wr;
            const double gl = 2.0 * s.path[t] * r;
            auto gr = gb->row(m.tree.leaf_col(t));
            gr[0] += gl;
            for (int j = 0; j < m.num_features; ++j) gr[j + 1] += gl * x[j];
        }
    }
    if constexpr (WithGrad) {
        const double inv_p = 1.0 / static_cast<double>(m.num_features);
        for (auto it = pl.branches.rbegin(); it != pl.branches.rend(); ++it) {
            const int t = *it;
            s.w[t] = s.w[2 * t] + s.w[2 * t + 1];
            const double gu = m.mu * ((1.0 - s.p[t]) * s.w[2 * t] - s.p[t] * s.w[2 * t + 1]);
            auto gr = gw->row(m.tree.branch_col(t));
            gr[0] += gu;
            for (int j = 0; j < m.num_features; ++j) gr[j + 1] += gu * x[j] * inv_p;
        }
    }
    return err;
}

inline std::size_t row_at(const Plan& pl, std::size_t k) { return pl.idx ? pl.idx[k] : k; }

} // namespace

double error_sum(const SrtModel& m, const Mat& X, std::span<const double> y,
                 const Scope& scope, Exec exec) {
    const Plan pl = make_plan(m, X, scope);
    if (exec == Exec::Serial) {
        Scratch s(m.tree);
        double e = 0.0;
        for (std::size_t k = 0; k < pl.n; ++k)
            e += eval_point<false>(m, X, y.data(), pl, row_at(pl, k), s, nullptr, nullptr);
        return e;
    }
    const std::size_t nchunks = (pl.n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long c = 0; c < static_cast<long long>(nchunks); ++c) {
        Scratch s(m.tree);
        const std::size_t b = static_cast<std::size_t>(c) * kChunk;
        const std::size_t e = std::min(pl.n, b + kChunk);
        double acc = 0.0;
        for (std::size_t k = b; k < e; ++k)
            acc += eval_point<false>(m, X, y.data(), pl, row_at(pl, k), s, nullptr, nullptr);
        partial[static_cast<std::size_t>(c)] = acc;
    }
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
}

GradSums error_and_grad_sums(const SrtModel& m, const Mat& X, std::span<const double> y,
                             const Scope& scope, Exec exec) {
    const Plan pl = make_plan(m, X, scope);
    GradSums out;
    out.g_omega = Mat(m.omega.rows(), m.omega.cols());
    out.g_beta = Mat(m.beta.rows(), m.beta.cols());
    if (exec == Exec::Serial) {
        Scratch s(m.tree);
        for (std::size_t k = 0; k < pl.n; ++k)
            out.err += eval_point<true>(m, X, y.data(), pl, row_at(pl, k), s,
                                        &out.g_omega, &out.g_beta);
        return out;
    }
    const std::size_t nchunks = (pl.n + kChunk - 1) / kChunk;
    std::vector<double> perr(nchunks, 0.0);
    std::vector<Mat> pgw(nchunks), pgb(nchunks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long c = 0; c < static_cast<long long>(nchunks); ++c) {
        Scratch s(m.tree);
        Mat gw(m.omega.rows(), m.omega.cols()), gb(m.beta.rows(), m.beta.cols());
        const std::size_t b = static_cast<std::size_t>(c) * kChunk;
        const std::size_t e = std::min(pl.n, b + kChunk);
        double acc = 0.0;
        for (std::size_t k = b; k < e; ++k)
            acc += eval_point<true>(m, X, y.data(), pl, row_at(pl, k), s, &gw, &gb);
        perr[static_cast<std::size_t>(c)] = acc;
        pgw[static_cast<std::size_t>(c)] = std::move(gw);
        pgb[static_cast<std::size_t>(c)] = std::move(gb);
    }
    for (std::size_t c = 0; c < nchunks; ++c) {
        out.err += perr[c];
        for (std::size_t i = 0; i < out.g_omega.size(); ++i)
            out.g_omega.data()[i] += pgw[c].data()[i];
        for (std::size_t i = 0; i < out.g_beta.size(); ++i)
            out.g_beta.data()[i] += pgb[c].data()[i];
    }
    return out;
}

std::vector<int> route_all(const SrtModel& m, const Mat& X, Exec exec) {
    std::vector<int> out(X.rows());
    const long long n = static_cast<long long>(X.rows());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
#endif
    for (long long i = 0; i < n; ++i) {
        auto x = X.row(static_cast<std::size_t>(i));
        int t = 1;
        while (!m.tree.is_leaf(t)) {
            const double p = sigmoid_prob(m.mu, m.gate_input(t, x));
            t = p >= 0.5 ? TreeTopology::left(t) : TreeTopology::right(t);
        }
        out[static_cast<std::size_t>(i)] = t;
    }
    (void)exec;
    return out;
}

std::vector<double> point_residuals(const SrtModel& m, const Mat& X, std::span<const double> y,
                                    const Scope& scope, Exec exec) {
    const Plan pl = make_plan(m, X, scope);
    std::vector<double> out(pl.n);
    const long long n = static_cast<long long>(pl.n);
#ifdef _OPENMP
#pragma omp parallel if (exec == Exec::Parallel)
    {
        Scratch s(m.tree);
#pragma omp for schedule(static)
        for (long long k = 0; k < n; ++k)
            out[static_cast<std::size_t>(k)] = eval_point<false>(
                m, X, y.data(), pl, row_at(pl, static_cast<std::size_t>(k)), s, nullptr, nullptr);
    }
#else
    (void)exec;
    Scratch s(m.tree);
    for (long long k = 0; k < n; ++k)
        out[static_cast<std::size_t>(k)] = eval_point<false>(
            m, X, y.data(), pl, row_at(pl, static_cast<std::size_t>(k)), s, nullptr, nullptr);
#endif
    return out;
}

LeafSystems leaf_systems(const SrtModel& m, const Mat& X, std::span<const double> y,
                         const Scope& scope, std::span<const int> leaves, Exec exec) {
    const Plan pl = make_plan(m, X, scope);
    const std::size_t d = static_cast<std::size_t>(m.num_features) + 1;
    LeafSystems out;
    out.leaves.assign(leaves.begin(), leaves.end());
    for (int t : out.leaves)
        if (!m.tree.valid_node(t) || !m.tree.is_leaf(t) || t < pl.leaf_lo || t > pl.leaf_hi)
            throw InvalidInputError("leaf_systems: node " + std::to_string(t) +
                                    " is not a leaf inside the scope");
    const std::size_t nl = out.leaves.size();
    out.A.assign(nl, std::vector<double>(d * d, 0.0));
    out.b.assign(nl, std::vector<double>(d, 0.0));
    out.mass.assign(nl, 0.0);

    auto accumulate = [&](std::size_t b, std::size_t e, Scratch& s,
                          std::vector<std::vector<double>>& A,
                          std::vector<std::vector<double>>& rhs, std::vector<double>& mass) {
        for (std::size_t k = b; k < e; ++k) {
            const std::size_t row = row_at(pl, k);
            eval_point<false>(m, X, y.data(), pl, row, s, nullptr, nullptr);
            auto x = X.row(row);
            for (std::size_t li = 0; li < nl; ++li) {
                const double w = s.path[out.leaves[li]];
                mass[li] += w;
                auto& Ai = A[li];
                auto& bi = rhs[li];
                bi[0] += w * y[row];
                Ai[0] += w;
                for (std::size_t a = 1; a < d; ++a) {
                    const double wxa = w * x[a - 1];
                    bi[a] += wxa * y[row];
                    Ai[a] += wxa; // first row: w * x~_0 * x~_a
                    for (std::size_t bcol = a; bcol < d; ++bcol)
                        Ai[a * d + bcol] += wxa * x[bcol - 1];
                }
            }
        }
    };

    if (exec == Exec::Serial) {
        Scratch s(m.tree);
        accumulate(0, pl.n, s, out.A, out.b, out.mass);
    } else {
        const std::size_t nchunks = (pl.n + kChunk - 1) / kChunk;
        std::vector<LeafSystems> part(nchunks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long c = 0; c < static_cast<long long>(nchunks); ++c) {
            Scratch s(m.tree);
            auto& pc = part[static_cast<std::size_t>(c)];
            pc.A.assign(nl, std::vector<double>(d * d, 0.0));
            pc.b.assign(nl, std::vector<double>(d, 0.0));
            pc.mass.assign(nl, 0.0);
            const std::size_t b = static_cast<std::size_t>(c) * kChunk;
            accumulate(b, std::min(pl.n, b + kChunk), s, pc.A, pc.b, pc.mass);
        }
        for (std::size_t c = 0; c < nchunks; ++c) {
            for (std::size_t li = 0; li < nl; ++li) {
                out.mass[li] += part[c].mass[li];
                for (std::size_t i = 0; i < d * d; ++i) out.A[li][i] += part[c].A[li][i];
                for (std::size_t i = 0; i < d; ++i) out.b[li][i] += part[c].b[li][i];
            }
        }
    }
    // Mirror the upper triangles.
    for (std::size_t li = 0; li < nl; ++li)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t bcol = 0; bcol < a; ++bcol)
                out.A[li][a * d + bcol] = out.A[li][bcol * d + a];
    return out;
}

} // namespace srt::kernels
