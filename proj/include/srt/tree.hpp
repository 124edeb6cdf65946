#pragma once

#include <vector>

#include "srt/common.hpp"

namespace srt {

// Complete binary tree of depth D in heap order: branch nodes are 1..2^D-1,
// leaves are 2^D..2^(D+1)-1, children of t are (2t, 2t+1), parent is t/2.
struct TreeTopology {
    int depth = 0;

    explicit TreeTopology(int d = 1) : depth(d) {
        if (d < 1) throw InvalidInputError("tree depth must be >= 1, got " + std::to_string(d));
    }

    int num_branch() const { return (1 << depth) - 1; }
    int num_leaves() const { return 1 << depth; }
    int first_leaf() const { return 1 << depth; }
    int last_leaf() const { return (1 << (depth + 1)) - 1; }

    bool is_leaf(int t) const { return t >= first_leaf(); }
    bool valid_node(int t) const { return t >= 1 && t <= last_leaf(); }

    static int left(int t) { return 2 * t; }
    static int right(int t) { return 2 * t + 1; }
    static int parent(int t) { return t / 2; }

    // Level of a node (root is level 0).
    static int level(int t) {
        int lv = 0;
        while (t > 1) { t >>= 1; ++lv; }
        return lv;
    }

    int branch_col(int t) const { return t - 1; }             // storage column of branch t
    int leaf_col(int t) const { return t - first_leaf(); }    // storage column of leaf t

    // Branch-node descendants of t, including t itself when t is a branch.
    std::vector<int> subtree_branches(int t) const {
        std::vector<int> out;
        int lo = t, hi = t;
        while (lo < first_leaf()) {
            for (int u = lo; u <= hi; ++u) out.push_back(u);
            lo = 2 * lo;
            hi = 2 * hi + 1;
        }
        return out;
    }

    // Leaves of the subtree rooted at t.
    std::vector<int> subtree_leaves(int t) const {
        int lo = t, hi = t;
        while (lo < first_leaf()) {
            lo = 2 * lo;
            hi = 2 * hi + 1;
        }
        std::vector<int> out;
        out.reserve(hi - lo + 1);
        for (int u = lo; u <= hi; ++u) out.push_back(u);
        return out;
    }

    // Contiguous leaf range [lo, hi] under t (subtree_leaves without the copy).
    std::pair<int, int> leaf_range(int t) const {
        int lo = t, hi = t;
        while (lo < first_leaf()) {
            lo = 2 * lo;
            hi = 2 * hi + 1;
        }
        return {lo, hi};
    }

    // Ancestor branches of node t (t itself excluded), with the side taken:
    // entries are (branch, went_left).
    std::vector<std::pair<int, bool>> ancestors(int t) const {
        std::vector<std::pair<int, bool>> out;
        while (t > 1) {
            int par = parent(t);
            out.emplace_back(par, t == left(par));
            t = par;
        }
        return out;
    }
};

} // namespace srt
