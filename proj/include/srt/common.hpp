#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace srt {

// ---------------------------------------------------------------------------
// Error taxonomy.  Input/usage problems and numeric failures are kept apart
// so the CLI can map them to distinct exit codes.
// ---------------------------------------------------------------------------

// Malformed or out-of-contract input: bad CSV cells, invalid config values,
// dimension mismatches, degenerate datasets.
struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Backtracking line search exhausted its budget without sufficient decrease.
struct LineSearchError : std::runtime_error {
    explicit LineSearchError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rank-deficient normal equations with no regularization to fall back on.
struct SingularSystemError : std::runtime_error {
    explicit SingularSystemError(const std::string& msg) : std::runtime_error(msg) {}
};

// Weighted logistic refit asked for with one of the two classes empty.
struct DegenerateWeightsError : std::runtime_error {
    explicit DegenerateWeightsError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Small row-major dense matrix.  Everything in this library is tiny (a few
// dozen columns at most); rows are handed out as spans.
// ---------------------------------------------------------------------------
class Mat {
  public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return v_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {v_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {v_.data() + i * cols_, cols_}; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::size_t size() const { return v_.size(); }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

    bool operator==(const Mat& o) const = default;

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2sq(std::span<const double> a) { return dot(a, a); }
inline double norm2(std::span<const double> a) { return std::sqrt(norm2sq(a)); }

// ---------------------------------------------------------------------------
// Deterministic RNG.  splitmix64 core; all sampling helpers are hand-rolled
// so sequences are identical across standard libraries and platforms.
// ---------------------------------------------------------------------------
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n).  Multiply-shift bound; bias < 2^-64.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller (no rejection, so stream use is fixed).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Decorrelated child stream for sub-tasks (folds, repetitions, ...).
    Rng child(std::uint64_t salt) const {
        Rng mix(state_ ^ (0x632be59bd9b4e019ULL * (salt + 1)));
        return Rng(mix.next_u64());
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace srt
