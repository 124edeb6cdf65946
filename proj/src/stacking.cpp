#include "srt/stacking.hpp"

namespace srt {

namespace {

void require_stackable(const SrtModel& a, const SrtModel& b) {
    if (a.num_features != b.num_features)
        throw InvalidInputError("stacking: trees disagree on the feature count");
    if (a.mu != b.mu) throw InvalidInputError("stacking: trees disagree on mu");
    for (const SrtModel* m : {&a, &b})
        for (std::size_t l = 0; l < m->beta.rows(); ++l)
            for (std::size_t j = 1; j < m->beta.cols(); ++j)
                if (m->beta(l, j) != 0.0)
                    throw InvalidInputError(
                        "stacking requires constant leaves (all non-intercept leaf "
                        "coefficients zero)");
}

// Shared gate layout; combine decides how the two leaf constants merge.
template <typename Combine>
SrtModel stack_impl(const SrtModel& t1, const SrtModel& t2, Combine combine) {
    require_stackable(t1, t2);
    const int d1 = t1.tree.depth, d2 = t2.tree.depth;
    SrtModel out(d1 + d2, t1.num_features, t1.mu);

    // Top d1 levels: T1's gates, same heap indices.
    for (int t = 1; t < t1.tree.first_leaf(); ++t) {
        auto src = t1.omega.row(t1.tree.branch_col(t));
        auto dst = out.omega.row(out.tree.branch_col(t));
        std::copy(src.begin(), src.end(), dst.begin());
    }
    // Remaining levels: the same T2 gate for every copy.  A stacked node u at
    // level d1 + j sits in the copy rooted at v = u >> j; replacing those top
    // bits with 1 recovers the T2 node it mirrors.
    for (int u = t1.tree.first_leaf(); u < out.tree.first_leaf(); ++u) {
        const int j = TreeTopology::level(u) - d1;
        const int t2node = (1 << j) + (u - ((u >> j) << j));
        auto src = t2.omega.row(t2.tree.branch_col(t2node));
        auto dst = out.omega.row(out.tree.branch_col(u));
        std::copy(src.begin(), src.end(), dst.begin());
    }
    // Leaves: ordinal tau decomposes as (tau1-1)*2^d2 + tau2.
    for (int tau = 1; tau <= out.tree.num_leaves(); ++tau) {
        auto [tau1, tau2] = leaf_label_pair(tau, d1, d2);
        const double c1 = t1.beta(static_cast<std::size_t>(tau1 - 1), 0);
        const double c2 = t2.beta(static_cast<std::size_t>(tau2 - 1), 0);
        out.beta(static_cast<std::size_t>(tau - 1), 0) = combine(c1, c2);
    }
    return out;
}

} // namespace

std::pair<int, int> leaf_label_pair(int leaf_ordinal, int depth1, int depth2) {
    if (depth1 < 1 || depth2 < 1)
        throw InvalidInputError("leaf_label_pair: depths must be >= 1");
    const int total = 1 << (depth1 + depth2);
    if (leaf_ordinal < 1 || leaf_ordinal > total)
        throw InvalidInputError("leaf_label_pair: leaf ordinal out of range");
    const int block = 1 << depth2;
    const int t1 = (leaf_ordinal + block - 1) / block; // ceil(ordinal / 2^d2)
    const int t2 = (leaf_ordinal - 1) % block + 1;
    return {t1, t2};
}

SrtModel stack_product(const SrtModel& t1, const SrtModel& t2) {
    return stack_impl(t1, t2, [](double a, double b) { return a * b; });
}

SrtModel stack_sum(const SrtModel& t1, const SrtModel& t2) {
    return stack_impl(t1, t2, [](double a, double b) { return a + b; });
}

} // namespace srt
