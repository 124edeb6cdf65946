// Compares the serial reference kernels against the chunked parallel ones:
// same numbers (bit-for-bit by construction), hopefully less time.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "srt/kernels.hpp"
#include "srt/model.hpp"

using namespace srt;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_seconds();
        f();
        best = std::min(best, now_seconds() - t0);
    }
    return best;
}

} // namespace

int main(int argc, char** argv) {
    std::size_t n = 200000;
    int depth = 4, p = 10, reps = 5;
    if (argc > 1) n = static_cast<std::size_t>(std::stoull(argv[1]));
    if (argc > 2) depth = std::stoi(argv[2]);
    if (argc > 3) p = std::stoi(argv[3]);
    if (argc > 4) reps = std::stoi(argv[4]);

    Rng rng(42);
    const SrtModel model = SrtModel::random(depth, p, 1.0, rng, 2.0);
    Mat X(n, static_cast<std::size_t>(p));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) X(i, static_cast<std::size_t>(j)) = rng.uniform01();
        y[i] = rng.gaussian();
    }

    std::printf("kernel benchmark: n=%zu depth=%d p=%d (best of %d)\n", n, depth, p, reps);
#ifdef _OPENMP
    std::printf("OpenMP enabled\n");
#else
    std::printf("OpenMP not available; parallel path runs its serial fallback\n");
#endif

    double checksum_serial = 0.0, checksum_parallel = 0.0;

    const double t_err_s = time_best_of(reps, [&] {
        checksum_serial = kernels::error_sum(model, X, y, {}, kernels::Exec::Serial);
    });
    const double t_err_p = time_best_of(reps, [&] {
        checksum_parallel = kernels::error_sum(model, X, y, {}, kernels::Exec::Parallel);
    });
    std::printf("error_sum            serial %8.4f s   parallel %8.4f s   speedup %5.2fx\n",
                t_err_s, t_err_p, t_err_s / t_err_p);
    if (std::abs(checksum_serial - checksum_parallel) >
        1e-12 * (1.0 + std::abs(checksum_serial))) {
        std::printf("MISMATCH: %.17g vs %.17g\n", checksum_serial, checksum_parallel);
        return 1;
    }

    kernels::GradSums gs, gp;
    const double t_grad_s = time_best_of(reps, [&] {
        gs = kernels::error_and_grad_sums(model, X, y, {}, kernels::Exec::Serial);
    });
    const double t_grad_p = time_best_of(reps, [&] {
        gp = kernels::error_and_grad_sums(model, X, y, {}, kernels::Exec::Parallel);
    });
    std::printf("error_and_grad_sums  serial %8.4f s   parallel %8.4f s   speedup %5.2fx\n",
                t_grad_s, t_grad_p, t_grad_s / t_grad_p);
    double grad_diff = std::abs(gs.err - gp.err);
    for (std::size_t i = 0; i < gs.g_omega.size(); ++i)
        grad_diff = std::max(grad_diff, std::abs(gs.g_omega.data()[i] - gp.g_omega.data()[i]));
    for (std::size_t i = 0; i < gs.g_beta.size(); ++i)
        grad_diff = std::max(grad_diff, std::abs(gs.g_beta.data()[i] - gp.g_beta.data()[i]));
    if (grad_diff > 1e-12) {
        std::printf("MISMATCH: max gradient difference %.3g\n", grad_diff);
        return 1;
    }

    std::vector<int> rs, rp;
    const double t_route_s =
        time_best_of(reps, [&] { rs = kernels::route_all(model, X, kernels::Exec::Serial); });
    const double t_route_p =
        time_best_of(reps, [&] { rp = kernels::route_all(model, X, kernels::Exec::Parallel); });
    std::printf("route_all            serial %8.4f s   parallel %8.4f s   speedup %5.2fx\n",
                t_route_s, t_route_p, t_route_s / t_route_p);
    if (rs != rp) {
        std::printf("MISMATCH: routing differs\n");
        return 1;
    }

    std::printf("agreement checks passed\n");
    return 0;
}
