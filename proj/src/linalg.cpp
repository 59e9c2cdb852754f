#include "linalg.hpp"

#include <cstring>

#include "convscope/parallel.hpp"

namespace convscope::linalg {

namespace {

void rows_nn(const double* a, const double* b, double* c, int64_t k, int64_t n,
             bool accumulate, int64_t row_begin, int64_t row_end) {
  for (int64_t i = row_begin; i < row_end; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    const double* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void rows_nt(const double* a, const double* b, double* c, int64_t k, int64_t n,
             bool accumulate, int64_t row_begin, int64_t row_end) {
  for (int64_t i = row_begin; i < row_end; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      if (accumulate)
        ci[j] += acc;
      else
        ci[j] = acc;
    }
  }
}

void rows_tn(const double* a, const double* b, double* c, int64_t k, int64_t m,
             int64_t n, bool accumulate, int64_t row_begin, int64_t row_end) {
  for (int64_t i = row_begin; i < row_end; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    for (int64_t p = 0; p < k; ++p) {
      double av = a[p * m + i];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
               int64_t n, bool accumulate, bool parallel) {
  if (m <= 0 || n <= 0) return;
  if (parallel && m > 1) {
    parallel_for(static_cast<size_t>(m), [&](size_t lo, size_t hi) {
      rows_nn(a, b, c, k, n, accumulate, static_cast<int64_t>(lo), static_cast<int64_t>(hi));
    });
  } else {
    rows_nn(a, b, c, k, n, accumulate, 0, m);
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
               int64_t n, bool accumulate, bool parallel) {
  if (m <= 0 || n <= 0) return;
  if (parallel && m > 1) {
    parallel_for(static_cast<size_t>(m), [&](size_t lo, size_t hi) {
      rows_nt(a, b, c, k, n, accumulate, static_cast<int64_t>(lo), static_cast<int64_t>(hi));
    });
  } else {
    rows_nt(a, b, c, k, n, accumulate, 0, m);
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k,
               int64_t n, bool accumulate, bool parallel) {
  if (m <= 0 || n <= 0) return;
  if (parallel && m > 1) {
    parallel_for(static_cast<size_t>(m), [&](size_t lo, size_t hi) {
      rows_tn(a, b, c, k, m, n, accumulate, static_cast<int64_t>(lo), static_cast<int64_t>(hi));
    });
  } else {
    rows_tn(a, b, c, k, m, n, accumulate, 0, m);
  }
}

}  // namespace convscope::linalg
