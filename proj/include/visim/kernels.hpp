#pragma once

#include <cstdint>

// Dense kernels backing the tensor ops. Every kernel exists twice: a serial
// reference (`*_serial`) and a dispatching version that runs the same inner
// worker across OpenMP threads when the problem is large enough. Both paths
// call one shared row/range worker, so outputs are bit-identical for any
// thread count; reductions that would need a reordered sum stay serial.

namespace visim::kern {

// True when the parallel path is compiled in and not forced off.
bool parallel_enabled();

// Test/benchmark hook: force every dispatching kernel onto the serial path.
void set_force_serial(bool force);

// C[n x m] = A[n x k] * B[k x m], row-major.
void gemm_nn_serial(const double* a, const double* b, double* c,
                    std::int64_t n, std::int64_t k, std::int64_t m);
void gemm_nn(const double* a, const double* b, double* c,
             std::int64_t n, std::int64_t k, std::int64_t m);

// C[n x m] = A[n x k] * B[m x k]^T  (B stored row-major as m x k).
void gemm_nt_serial(const double* a, const double* b, double* c,
                    std::int64_t n, std::int64_t k, std::int64_t m);
void gemm_nt(const double* a, const double* b, double* c,
             std::int64_t n, std::int64_t k, std::int64_t m);

// C[k x m] = A[n x k]^T * B[n x m].
void gemm_tn_serial(const double* a, const double* b, double* c,
                    std::int64_t n, std::int64_t k, std::int64_t m);
void gemm_tn(const double* a, const double* b, double* c,
             std::int64_t n, std::int64_t k, std::int64_t m);

enum class Unary { kRelu, kReluGrad, kExp, kLog, kSoftplus, kSigmoid, kNeg };

void map_unary_serial(Unary op, const double* x, double* y, std::int64_t n);
void map_unary(Unary op, const double* x, double* y, std::int64_t n);

enum class Binary { kAdd, kSub, kMul };

void map_binary_serial(Binary op, const double* a, const double* b, double* y,
                       std::int64_t n);
void map_binary(Binary op, const double* a, const double* b, double* y,
                std::int64_t n);

// y = a * x + b elementwise (scalar a, b).
void affine_serial(const double* x, double* y, std::int64_t n, double a, double b);
void affine(const double* x, double* y, std::int64_t n, double a, double b);

// y[i] = max(x[i], lo)
void clamp_min_serial(const double* x, double* y, std::int64_t n, double lo);
void clamp_min(const double* x, double* y, std::int64_t n, double lo);

// Row-wise L2 normalization of a row-major [n x m] matrix; rows with norm
// below `tiny` are left untouched. `norms` (optional, length n) receives the
// pre-normalization norms.
void l2_normalize_rows_serial(const double* x, double* y, std::int64_t n,
                              std::int64_t m, double* norms, double tiny);
void l2_normalize_rows(const double* x, double* y, std::int64_t n,
                       std::int64_t m, double* norms, double tiny);

// out[i] = sum_j x[i*m + j]
void row_sum_serial(const double* x, double* out, std::int64_t n, std::int64_t m);
void row_sum(const double* x, double* out, std::int64_t n, std::int64_t m);

// out[j] = sum_i x[i*m + j]
void col_sum_serial(const double* x, double* out, std::int64_t n, std::int64_t m);
void col_sum(const double* x, double* out, std::int64_t n, std::int64_t m);

// Fixed-order full reduction; deliberately serial (determinism over speed).
double sum_all(const double* x, std::int64_t n);

}  // namespace visim::kern
