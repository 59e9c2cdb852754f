#pragma once

// Internal dense kernels. Row-major throughout. Every inner reduction runs
// in ascending k order and each output element is owned by one worker, so
// results do not depend on the worker count.

#include <cstdint>

namespace convscope::linalg {

// C[M x N] = A[M x K] * B[K x N]   (accumulate: C +=)
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
               int64_t n, bool accumulate, bool parallel);

// C[M x N] = A[M x K] * B[N x K]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
               int64_t n, bool accumulate, bool parallel);

// C[M x N] = A[K x M]^T * B[K x N]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k,
               int64_t n, bool accumulate, bool parallel);

}  // namespace convscope::linalg
