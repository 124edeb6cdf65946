#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srt/common.hpp"
#include "srt/model.hpp"

namespace srt {

// A regression dataset: features row-wise, one response per row, and an
// optional integer cluster label per row (synthetic benchmarks).
struct Dataset {
    Mat X;                                  // N x p
    std::vector<double> y;                  // N
    std::vector<int> labels;                // empty or N entries
    std::vector<std::string> feature_names; // p entries

    std::size_t n() const { return X.rows(); }
    int p() const { return static_cast<int>(X.cols()); }
    bool has_labels() const { return !labels.empty(); }
};

// Column affine maps fitted on a training split and replayed elsewhere:
// features to [0,1] by min/max, response standardized by mean / sample std.
struct PreprocessParams {
    std::vector<double> feature_min, feature_max;
    double target_mean = 0.0;
    double target_std = 1.0;

    bool operator==(const PreprocessParams&) const = default;
};

// CSV with a header row; the last column is the response unless it is named
// "cluster_label", in which case the one before it is.  Cells must parse as
// finite decimal numbers (labels as integers); errors carry row/column.
Dataset load_csv(const std::string& path);

// Writes a dataset in the same layout load_csv reads (shortest round-trip
// number formatting, so values survive a write/read loop bit-exactly).
void save_csv(const std::string& path, const Dataset& ds);

// Fits the affine maps on a training split.  A constant response is an
// error; a constant feature is allowed and later maps to 0.
PreprocessParams fit_preprocess(const Dataset& train);

// Applies fitted maps.  Features are not clamped, so out-of-range test
// values land outside [0,1] by design.
Dataset apply_preprocess(const Dataset& ds, const PreprocessParams& pp);

inline double destandardize(double z, const PreprocessParams& pp) {
    return z * pp.target_std + pp.target_mean;
}

// Seed-deterministic k-fold split of {0..n-1}: returns k disjoint test-index
// sets covering every row, sizes differing by at most one.
std::vector<std::vector<std::size_t>> kfold(std::size_t n, int k, std::uint64_t seed);

// Subset a dataset by row indices.
Dataset take_rows(const Dataset& ds, std::span<const std::size_t> rows);

// Complement of `rows` within the dataset, order preserved.
Dataset drop_rows(const Dataset& ds, std::span<const std::size_t> rows);

// Coefficient of determination 1 - SS_res/SS_tot.  Needs >= 2 observations
// and a non-constant truth vector; can be negative.
double r_squared(std::span<const double> truth, std::span<const double> pred);

struct SyntheticSpec {
    std::size_t points_per_cluster = 375;
    double feature_noise = 0.06; // isotropic cluster spread
    double response_noise = 0.1; // additive Gaussian on the response
};

// Four well-separated Gaussian clusters in [0,1]^3, each with its own linear
// response map; rows carry the true cluster label.
Dataset gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec = {});

// Size-weighted mean Gini impurity of the true labels across the leaves the
// model hard-routes each point to: 0 = every leaf pure, labels required.
double gini_routing(const SrtModel& m, const Dataset& ds);

} // namespace srt
