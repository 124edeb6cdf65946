#pragma once

#include "srt/data.hpp"
#include "srt/model.hpp"

namespace srt {

// Hierarchical 2-means assignment over the tree: node_points[t] holds the
// row indices that reached node t (node 1 holds every row).
struct HierarchicalSplit {
    std::vector<std::vector<std::size_t>> node_points;
    bool degenerate = false; // some node had < 2 points or an empty 2-means side
};

// Splits the data top-down with 2-means (k-means++ seeding) at every branch
// node down to depth D.  Nodes with < 2 points push everything left.
HierarchicalSplit recursive_partition(const Mat& X, int depth, Rng& rng);

// Davies-Bouldin index of a flat clustering (lower = better separated).
// Empty clusters are ignored; fewer than 2 non-empty clusters is an error.
double davies_bouldin(const Mat& X, const std::vector<std::vector<std::size_t>>& clusters);

struct InitResult {
    SrtModel model;
    HierarchicalSplit split; // the winning assignment
    double db_score = 0.0;   // its Davies-Bouldin index
    int repetition = 0;      // which repetition won
};

// Clustering-based warm start: runs `repetitions` hierarchical splits with
// derived seeds, keeps the one whose leaf clustering has the lowest
// Davies-Bouldin index, then fits each gate by logistic regression (left
// child = class 1, matching the ties-left routing rule) and each leaf by
// least squares on its cluster.  Leaves with < 2 points fall back to the
// nearest ancestor cluster's mean response as a constant.
InitResult initialize(const Dataset& ds, int depth, int repetitions, std::uint64_t seed,
                      double mu = 1.0);

} // namespace srt
