#include "visim/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace visim::kern {

namespace {

std::atomic<bool> g_force_serial{false};

// Work below this many scalar ops is not worth a parallel region.
constexpr std::int64_t kGrain = 1 << 14;

bool use_parallel(std::int64_t work) {
#ifdef _OPENMP
  return !g_force_serial.load(std::memory_order_relaxed) && work >= kGrain;
#else
  (void)work;
  return false;
#endif
}

// Shared row workers. Serial and parallel entry points both funnel through
// these, so per-element arithmetic order (and therefore rounding) is
// identical on every path.

void gemm_nn_rows(const double* a, const double* b, double* c,
                  std::int64_t k, std::int64_t m,
                  std::int64_t r0, std::int64_t r1) {
  for (std::int64_t i = r0; i < r1; ++i) {
    double* ci = c + i * m;
    std::fill(ci, ci + m, 0.0);
    const double* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * m;
      for (std::int64_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_nt_rows(const double* a, const double* b, double* c,
                  std::int64_t k, std::int64_t m,
                  std::int64_t r0, std::int64_t r1) {
  for (std::int64_t i = r0; i < r1; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::int64_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

void gemm_tn_rows(const double* a, const double* b, double* c,
                  std::int64_t n, std::int64_t k, std::int64_t m,
                  std::int64_t r0, std::int64_t r1) {
  // rows of C index the k dimension of A.
  for (std::int64_t p = r0; p < r1; ++p) {
    double* cp = c + p * m;
    std::fill(cp, cp + m, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      const double aip = a[i * k + p];
      const double* bi = b + i * m;
      for (std::int64_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
}

double unary_apply(Unary op, double v) {
  switch (op) {
    case Unary::kRelu: return v > 0.0 ? v : 0.0;
    case Unary::kReluGrad: return v > 0.0 ? 1.0 : 0.0;
    case Unary::kExp: return std::exp(v);
    case Unary::kLog: return std::log(v);
    case Unary::kSoftplus: return std::fmax(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
    case Unary::kSigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Unary::kNeg: return -v;
  }
  return v;
}

void unary_range(Unary op, const double* x, double* y,
                 std::int64_t i0, std::int64_t i1) {
  switch (op) {
    case Unary::kRelu:
      for (std::int64_t i = i0; i < i1; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Unary::kReluGrad:
      for (std::int64_t i = i0; i < i1; ++i) y[i] = x[i] > 0.0 ? 1.0 : 0.0;
      break;
    default:
      for (std::int64_t i = i0; i < i1; ++i) y[i] = unary_apply(op, x[i]);
  }
}

void binary_range(Binary op, const double* a, const double* b, double* y,
                  std::int64_t i0, std::int64_t i1) {
  switch (op) {
    case Binary::kAdd:
      for (std::int64_t i = i0; i < i1; ++i) y[i] = a[i] + b[i];
      break;
    case Binary::kSub:
      for (std::int64_t i = i0; i < i1; ++i) y[i] = a[i] - b[i];
      break;
    case Binary::kMul:
      for (std::int64_t i = i0; i < i1; ++i) y[i] = a[i] * b[i];
      break;
  }
}

void affine_range(const double* x, double* y, double a, double b,
                  std::int64_t i0, std::int64_t i1) {
  for (std::int64_t i = i0; i < i1; ++i) y[i] = a * x[i] + b;
}

void clamp_range(const double* x, double* y, double lo,
                 std::int64_t i0, std::int64_t i1) {
  for (std::int64_t i = i0; i < i1; ++i) y[i] = x[i] > lo ? x[i] : lo;
}

void l2_rows_range(const double* x, double* y, std::int64_t m, double* norms,
                   double tiny, std::int64_t r0, std::int64_t r1) {
  for (std::int64_t i = r0; i < r1; ++i) {
    const double* xi = x + i * m;
    double* yi = y + i * m;
    double sq = 0.0;
    for (std::int64_t j = 0; j < m; ++j) sq += xi[j] * xi[j];
    const double norm = std::sqrt(sq);
    if (norms) norms[i] = norm;
    if (norm > tiny) {
      const double inv = 1.0 / norm;
      for (std::int64_t j = 0; j < m; ++j) yi[j] = xi[j] * inv;
    } else {
      for (std::int64_t j = 0; j < m; ++j) yi[j] = xi[j];
    }
  }
}

void row_sum_range(const double* x, double* out, std::int64_t m,
                   std::int64_t r0, std::int64_t r1) {
  for (std::int64_t i = r0; i < r1; ++i) {
    const double* xi = x + i * m;
    double acc = 0.0;
    for (std::int64_t j = 0; j < m; ++j) acc += xi[j];
    out[i] = acc;
  }
}

void col_sum_range(const double* x, double* out, std::int64_t n, std::int64_t m,
                   std::int64_t c0, std::int64_t c1) {
  for (std::int64_t j = c0; j < c1; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += x[i * m + j];
    out[j] = acc;
  }
}

}  // namespace

bool parallel_enabled() {
#ifdef _OPENMP
  return !g_force_serial.load(std::memory_order_relaxed);
#else
  return false;
#endif
}

void set_force_serial(bool force) {
  g_force_serial.store(force, std::memory_order_relaxed);
}

void gemm_nn_serial(const double* a, const double* b, double* c,
                    std::int64_t n, std::int64_t k, std::int64_t m) {
  gemm_nn_rows(a, b, c, k, m, 0, n);
}

void gemm_nn(const double* a, const double* b, double* c,
             std::int64_t n, std::int64_t k, std::int64_t m) {
  if (use_parallel(n * k * m)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) gemm_nn_rows(a, b, c, k, m, i, i + 1);
#endif
  } else {
    gemm_nn_rows(a, b, c, k, m, 0, n);
  }
}

void gemm_nt_serial(const double* a, const double* b, double* c,
                    std::int64_t n, std::int64_t k, std::int64_t m) {
  gemm_nt_rows(a, b, c, k, m, 0, n);
}

void gemm_nt(const double* a, const double* b, double* c,
             std::int64_t n, std::int64_t k, std::int64_t m) {
  if (use_parallel(n * k * m)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) gemm_nt_rows(a, b, c, k, m, i, i + 1);
#endif
  } else {
    gemm_nt_rows(a, b, c, k, m, 0, n);
  }
}

void gemm_tn_serial(const double* a, const double* b, double* c,
                    std::int64_t n, std::int64_t k, std::int64_t m) {
  gemm_tn_rows(a, b, c, n, k, m, 0, k);
}

void gemm_tn(const double* a, const double* b, double* c,
             std::int64_t n, std::int64_t k, std::int64_t m) {
  if (use_parallel(n * k * m)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < k; ++p) gemm_tn_rows(a, b, c, n, k, m, p, p + 1);
#endif
  } else {
    gemm_tn_rows(a, b, c, n, k, m, 0, k);
  }
}

void map_unary_serial(Unary op, const double* x, double* y, std::int64_t n) {
  unary_range(op, x, y, 0, n);
}

void map_unary(Unary op, const double* x, double* y, std::int64_t n) {
  if (use_parallel(n)) {
#ifdef _OPENMP
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int t = omp_get_thread_num();
      const std::int64_t chunk = (n + nt - 1) / nt;
      const std::int64_t i0 = std::min<std::int64_t>(n, t * chunk);
      const std::int64_t i1 = std::min<std::int64_t>(n, i0 + chunk);
      unary_range(op, x, y, i0, i1);
    }
#endif
  } else {
    unary_range(op, x, y, 0, n);
  }
}

void map_binary_serial(Binary op, const double* a, const double* b, double* y,
                       std::int64_t n) {
  binary_range(op, a, b, y, 0, n);
}

void map_binary(Binary op, const double* a, const double* b, double* y,
                std::int64_t n) {
  if (use_parallel(n)) {
#ifdef _OPENMP
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int t = omp_get_thread_num();
      const std::int64_t chunk = (n + nt - 1) / nt;
      const std::int64_t i0 = std::min<std::int64_t>(n, t * chunk);
      const std::int64_t i1 = std::min<std::int64_t>(n, i0 + chunk);
      binary_range(op, a, b, y, i0, i1);
    }
#endif
  } else {
    binary_range(op, a, b, y, 0, n);
  }
}

void affine_serial(const double* x, double* y, std::int64_t n, double a, double b) {
  affine_range(x, y, a, b, 0, n);
}

void affine(const double* x, double* y, std::int64_t n, double a, double b) {
  if (use_parallel(n)) {
#ifdef _OPENMP
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int t = omp_get_thread_num();
      const std::int64_t chunk = (n + nt - 1) / nt;
      const std::int64_t i0 = std::min<std::int64_t>(n, t * chunk);
      const std::int64_t i1 = std::min<std::int64_t>(n, i0 + chunk);
      affine_range(x, y, a, b, i0, i1);
    }
#endif
  } else {
    affine_range(x, y, a, b, 0, n);
  }
}

void clamp_min_serial(const double* x, double* y, std::int64_t n, double lo) {
  clamp_range(x, y, lo, 0, n);
}

void clamp_min(const double* x, double* y, std::int64_t n, double lo) {
  if (use_parallel(n)) {
#ifdef _OPENMP
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int t = omp_get_thread_num();
      const std::int64_t chunk = (n + nt - 1) / nt;
      const std::int64_t i0 = std::min<std::int64_t>(n, t * chunk);
      const std::int64_t i1 = std::min<std::int64_t>(n, i0 + chunk);
      clamp_range(x, y, lo, i0, i1);
    }
#endif
  } else {
    clamp_range(x, y, lo, 0, n);
  }
}

void l2_normalize_rows_serial(const double* x, double* y, std::int64_t n,
                              std::int64_t m, double* norms, double tiny) {
  l2_rows_range(x, y, m, norms, tiny, 0, n);
}

void l2_normalize_rows(const double* x, double* y, std::int64_t n,
                       std::int64_t m, double* norms, double tiny) {
  if (use_parallel(n * m)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
      l2_rows_range(x, y, m, norms, tiny, i, i + 1);
#endif
  } else {
    l2_rows_range(x, y, m, norms, tiny, 0, n);
  }
}

void row_sum_serial(const double* x, double* out, std::int64_t n, std::int64_t m) {
  row_sum_range(x, out, m, 0, n);
}

void row_sum(const double* x, double* out, std::int64_t n, std::int64_t m) {
  if (use_parallel(n * m)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) row_sum_range(x, out, m, i, i + 1);
#endif
  } else {
    row_sum_range(x, out, m, 0, n);
  }
}

void col_sum_serial(const double* x, double* out, std::int64_t n, std::int64_t m) {
  col_sum_range(x, out, n, m, 0, m);
}

void col_sum(const double* x, double* out, std::int64_t n, std::int64_t m) {
  if (use_parallel(n * m)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < m; ++j) col_sum_range(x, out, n, m, j, j + 1);
#endif
  } else {
    col_sum_range(x, out, n, m, 0, m);
  }
}

double sum_all(const double* x, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace visim::kern
