// Timing comparison of the serial reference kernels against the OpenMP
// path. The two must agree bit for bit; this tool reports the speedup.

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <vector>

#include "visim/kernels.hpp"
#include "visim/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using visim::kern::gemm_nn;
using visim::kern::gemm_nn_serial;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void fill_random(std::vector<double>& v, visim::SeededRng& rng) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

}  // namespace

int main() {
  visim::SeededRng rng(2024);
#ifdef _OPENMP
  std::printf("OpenMP enabled, %d threads\n", omp_get_max_threads());
#else
  std::printf("OpenMP not compiled in; both columns run the serial path\n");
#endif

  std::printf("%-28s %12s %12s %9s %8s\n", "kernel", "serial [ms]", "parallel [ms]",
              "speedup", "bitexact");

  struct GemmCase { std::int64_t n, k, m; };
  for (const GemmCase c : {GemmCase{64, 64, 256}, GemmCase{64, 256, 256},
                           GemmCase{256, 256, 256}, GemmCase{512, 512, 512}}) {
    std::vector<double> a(c.n * c.k), b(c.k * c.m), out_s(c.n * c.m), out_p(c.n * c.m);
    fill_random(a, rng);
    fill_random(b, rng);
    const int reps = c.n >= 512 ? 5 : 20;
    const double ts = time_best_of(reps, [&] {
      gemm_nn_serial(a.data(), b.data(), out_s.data(), c.n, c.k, c.m);
    });
    const double tp = time_best_of(reps, [&] {
      gemm_nn(a.data(), b.data(), out_p.data(), c.n, c.k, c.m);
    });
    const bool exact =
        std::memcmp(out_s.data(), out_p.data(), out_s.size() * sizeof(double)) == 0;
    char name[64];
    std::snprintf(name, sizeof(name), "gemm_nn %" PRId64 "x%" PRId64 "x%" PRId64,
                  c.n, c.k, c.m);
    std::printf("%-28s %12.3f %12.3f %8.2fx %8s\n", name, ts * 1e3, tp * 1e3, ts / tp,
                exact ? "yes" : "NO");
  }

  for (const std::int64_t n : {1 << 16, 1 << 20}) {
    std::vector<double> x(n), y_s(n), y_p(n);
    fill_random(x, rng);
    const double ts = time_best_of(20, [&] {
      visim::kern::map_unary_serial(visim::kern::Unary::kSoftplus, x.data(), y_s.data(), n);
    });
    const double tp = time_best_of(20, [&] {
      visim::kern::map_unary(visim::kern::Unary::kSoftplus, x.data(), y_p.data(), n);
    });
    const bool exact = std::memcmp(y_s.data(), y_p.data(), n * sizeof(double)) == 0;
    char name[64];
    std::snprintf(name, sizeof(name), "softplus map n=%" PRId64, n);
    std::printf("%-28s %12.3f %12.3f %8.2fx %8s\n", name, ts * 1e3, tp * 1e3, ts / tp,
                exact ? "yes" : "NO");
  }

  for (const std::int64_t rows : {512, 4096}) {
    const std::int64_t cols = 64;
    std::vector<double> x(rows * cols), y_s(rows * cols), y_p(rows * cols);
    fill_random(x, rng);
    const double ts = time_best_of(20, [&] {
      visim::kern::l2_normalize_rows_serial(x.data(), y_s.data(), rows, cols, nullptr, 1e-30);
    });
    const double tp = time_best_of(20, [&] {
      visim::kern::l2_normalize_rows(x.data(), y_p.data(), rows, cols, nullptr, 1e-30);
    });
    const bool exact =
        std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0;
    char name[64];
    std::snprintf(name, sizeof(name), "l2_normalize %" PRId64 "x%" PRId64, rows, cols);
    std::printf("%-28s %12.3f %12.3f %8.2fx %8s\n", name, ts * 1e3, tp * 1e3, ts / tp,
                exact ? "yes" : "NO");
  }
  return 0;
}
