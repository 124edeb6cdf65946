#include "srt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string_view>

#include "srt/kernels.hpp"

namespace srt {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.emplace_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.emplace_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

double parse_double(const std::string& cell, std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || !std::isfinite(v))
        throw InvalidInputError("row " + std::to_string(row) + " column " + std::to_string(col) +
                                ": cannot parse '" + cell + "' as a finite number");
    return v;
}

int parse_label(const std::string& cell, std::size_t row, std::size_t col) {
    int v = 0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e)
        throw InvalidInputError("row " + std::to_string(row) + " column " + std::to_string(col) +
                                ": cannot parse '" + cell + "' as an integer cluster label");
    return v;
}

} // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw InvalidInputError("'" + path + "' is empty");
    const auto header = split_line(line);
    if (header.size() < 2)
        throw InvalidInputError("'" + path + "' needs at least one feature and a response column");

    std::ptrdiff_t label_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == "cluster_label") {
            if (label_col >= 0) throw InvalidInputError("duplicate cluster_label column");
            label_col = static_cast<std::ptrdiff_t>(c);
        }
    std::ptrdiff_t response_col = static_cast<std::ptrdiff_t>(header.size()) - 1;
    if (response_col == label_col) --response_col;
    if (response_col < 0) throw InvalidInputError("no response column left after cluster_label");

    Dataset ds;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (static_cast<std::ptrdiff_t>(c) != label_col &&
            static_cast<std::ptrdiff_t>(c) != response_col)
            ds.feature_names.push_back(header[c]);
    const std::size_t p = ds.feature_names.size();
    if (p == 0) throw InvalidInputError("'" + path + "' has no feature columns");

    std::vector<double> xflat;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw InvalidInputError("row " + std::to_string(row) + ": expected " +
                                    std::to_string(header.size()) + " cells, got " +
                                    std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<std::ptrdiff_t>(c) == label_col)
                ds.labels.push_back(parse_label(cells[c], row, c + 1));
            else if (static_cast<std::ptrdiff_t>(c) == response_col)
                ds.y.push_back(parse_double(cells[c], row, c + 1));
            else
                xflat.push_back(parse_double(cells[c], row, c + 1));
        }
    }
    const std::size_t n = ds.y.size();
    if (n == 0) throw InvalidInputError("'" + path + "' has a header but no data rows");
    ds.X = Mat(n, p);
    std::copy(xflat.begin(), xflat.end(), ds.X.data());
    return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw InvalidInputError("cannot write '" + path + "'");
    auto num = [](double v) {
        char buf[32];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        (void)ec;
        return std::string(buf, ptr);
    };
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j) out << ds.feature_names[j] << ',';
    out << "y";
    if (ds.has_labels()) out << ",cluster_label";
    out << '\n';
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (int j = 0; j < ds.p(); ++j) out << num(ds.X(i, static_cast<std::size_t>(j))) << ',';
        out << num(ds.y[i]);
        if (ds.has_labels()) out << ',' << ds.labels[i];
        out << '\n';
    }
    if (!out.good()) throw InvalidInputError("write to '" + path + "' failed");
}

PreprocessParams fit_preprocess(const Dataset& train) {
    const std::size_t n = train.n();
    if (n < 2) throw InvalidInputError("preprocessing needs at least 2 rows");
    PreprocessParams pp;
    pp.feature_min.assign(train.X.cols(), std::numeric_limits<double>::infinity());
    pp.feature_max.assign(train.X.cols(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < train.X.cols(); ++j) {
            pp.feature_min[j] = std::min(pp.feature_min[j], train.X(i, j));
            pp.feature_max[j] = std::max(pp.feature_max[j], train.X(i, j));
        }
    double mean = 0.0;
    for (double v : train.y) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : train.y) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0))
        throw InvalidInputError("response is constant on the training split; nothing to fit");
    pp.target_mean = mean;
    pp.target_std = sd;
    return pp;
}

Dataset apply_preprocess(const Dataset& ds, const PreprocessParams& pp) {
    if (pp.feature_min.size() != ds.X.cols())
        throw InvalidInputError("preprocessing was fitted on a different feature count");
    Dataset out = ds;
    for (std::size_t j = 0; j < out.X.cols(); ++j) {
        const double lo = pp.feature_min[j];
        const double range = pp.feature_max[j] - lo;
        for (std::size_t i = 0; i < out.n(); ++i)
            out.X(i, j) = range > 0.0 ? (out.X(i, j) - lo) / range : 0.0;
    }
    for (double& v : out.y) v = (v - pp.target_mean) / pp.target_std;
    return out;
}

std::vector<std::vector<std::size_t>> kfold(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw InvalidInputError("kfold needs k >= 2");
    if (n < static_cast<std::size_t>(k))
        throw InvalidInputError("kfold: fewer rows than folds");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    const std::size_t base = n / static_cast<std::size_t>(k);
    std::size_t extra = n % static_cast<std::size_t>(k), at = 0;
    for (auto& fold : folds) {
        const std::size_t take = base + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;
        fold.assign(idx.begin() + at, idx.begin() + at + take);
        at += take;
    }
    return folds;
}

Dataset take_rows(const Dataset& ds, std::span<const std::size_t> rows) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.X = Mat(rows.size(), ds.X.cols());
    out.y.resize(rows.size());
    if (ds.has_labels()) out.labels.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t i = rows[k];
        if (i >= ds.n()) throw InvalidInputError("take_rows: index out of range");
        for (std::size_t j = 0; j < ds.X.cols(); ++j) out.X(k, j) = ds.X(i, j);
        out.y[k] = ds.y[i];
        if (ds.has_labels()) out.labels[k] = ds.labels[i];
    }
    return out;
}

Dataset drop_rows(const Dataset& ds, std::span<const std::size_t> rows) {
    std::vector<bool> dropped(ds.n(), false);
    for (std::size_t i : rows) {
        if (i >= ds.n()) throw InvalidInputError("drop_rows: index out of range");
        dropped[i] = true;
    }
    std::vector<std::size_t> keep;
    keep.reserve(ds.n() - rows.size());
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (!dropped[i]) keep.push_back(i);
    return take_rows(ds, keep);
}

double r_squared(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size()) throw InvalidInputError("r_squared: size mismatch");
    if (truth.size() < 2) throw InvalidInputError("r_squared needs at least 2 observations");
    double mean = 0.0;
    for (double v : truth) mean += v;
    mean /= static_cast<double>(truth.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
        ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    if (!(ss_tot > 0.0)) throw InvalidInputError("r_squared: constant truth vector");
    return 1.0 - ss_res / ss_tot;
}

Dataset gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec) {
    // Alternating cube corners keep the clusters well separated and
    // 2-means-recoverable at every tree level, so a depth-2 tree can give
    // each cluster its own leaf.
    static constexpr double centers[4][3] = {
        {0.2, 0.2, 0.2}, {0.8, 0.2, 0.8}, {0.2, 0.8, 0.8}, {0.8, 0.8, 0.2}};
    static constexpr double coef[4][3] = {{-1.51, 0.46, -3.81},
                                          {2.32, -1.41, -0.11},
                                          {-1.56, 1.12, 1.53},
                                          {-2.32, 1.41, 0.11}};
    const std::size_t per = spec.points_per_cluster;
    if (per == 0) throw InvalidInputError("gen_synthetic: empty clusters");
    Dataset ds;
    ds.feature_names = {"x1", "x2", "x3"};
    ds.X = Mat(4 * per, 3);
    ds.y.resize(4 * per);
    ds.labels.resize(4 * per);
    Rng rng(seed);
    for (int c = 0; c < 4; ++c)
        for (std::size_t k = 0; k < per; ++k) {
            const std::size_t i = static_cast<std::size_t>(c) * per + k;
            double response = 0.0;
            for (std::size_t j = 0; j < 3; ++j) {
                const double xj = centers[c][j] + spec.feature_noise * rng.gaussian();
                ds.X(i, j) = xj;
                response += coef[c][j] * xj;
            }
            ds.y[i] = response + spec.response_noise * rng.gaussian();
            ds.labels[i] = c;
        }
    return ds;
}

double gini_routing(const SrtModel& m, const Dataset& ds) {
    if (!ds.has_labels())
        throw InvalidInputError("gini_routing needs a dataset with cluster labels");
    if (ds.p() != m.num_features)
        throw InvalidInputError("gini_routing: feature count mismatch");
    const auto leaf_of = kernels::route_all(m, ds.X, kernels::Exec::Parallel);
    std::map<int, std::map<int, std::size_t>> counts; // leaf -> label -> count
    for (std::size_t i = 0; i < ds.n(); ++i) ++counts[leaf_of[i]][ds.labels[i]];
    double gini = 0.0;
    for (const auto& [leaf, by_label] : counts) {
        std::size_t n_leaf = 0;
        for (const auto& [lbl, cnt] : by_label) n_leaf += cnt;
        double sum_f2 = 0.0;
        for (const auto& [lbl, cnt] : by_label) {
            const double f = static_cast<double>(cnt) / static_cast<double>(n_leaf);
            sum_f2 += f * f;
        }
        gini += (static_cast<double>(n_leaf) / static_cast<double>(ds.n())) * (1.0 - sum_f2);
    }
    return gini;
}

} // namespace srt
