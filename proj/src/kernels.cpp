#include "fedsheaf/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace fedsheaf::kernels {

namespace {

// Row bodies shared by both variants so the arithmetic is identical.

inline void gemm_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                     std::size_t n) {
  double* ci = c + i * n;
  std::fill(ci, ci + n, 0.0);
  const double* ai = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t m, std::size_t k, std::size_t n) {
  double* ci = c + i * n;
  std::fill(ci, ci + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double api = a[p * m + i];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t n) {
  const double* ai = a + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const double* bj = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
    c[i * n + j] = s;
  }
}

inline void spmm_row(const CsrMatrix& a, const double* x, double* y, std::size_t i,
                     std::size_t f) {
  double* yi = y + i * f;
  std::fill(yi, yi + f, 0.0);
  for (std::size_t q = a.row_ptr[i]; q < a.row_ptr[i + 1]; ++q) {
    const double v = a.values[q];
    const double* xr = x + a.col_idx[q] * f;
    for (std::size_t j = 0; j < f; ++j) yi[j] += v * xr[j];
  }
}

inline void softmax_row(const double* a, double* out, std::size_t i, std::size_t n) {
  const double* ai = a + i * n;
  double* oi = out + i * n;
  const double mx = *std::max_element(ai, ai + n);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    oi[j] = std::exp(ai[j] - mx);
    z += oi[j];
  }
  for (std::size_t j = 0; j < n; ++j) oi[j] /= z;
}

bool go_parallel(std::size_t work) {
  return work >= kParallelWorkThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) gemm_row(a.data(), b.data(), c.data(), i, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) gemm_tn_row(a.data(), b.data(), c.data(), i, m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a.data(), b.data(), c.data(), i, k, n);
}

void spmm(const CsrMatrix& a, std::span<const double> x, std::span<double> y, std::size_t f) {
  for (std::size_t i = 0; i < a.rows; ++i) spmm_row(a, x.data(), y.data(), i, f);
}

void row_softmax(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) softmax_row(a.data(), out.data(), i, n);
}

}  // namespace serial

namespace omp {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    gemm_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    gemm_tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    gemm_nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n);
}

void spmm(const CsrMatrix& a, std::span<const double> x, std::span<double> y, std::size_t f) {
  const auto rows = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < rows; ++i)
    spmm_row(a, x.data(), y.data(), static_cast<std::size_t>(i), f);
}

void row_softmax(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    softmax_row(a.data(), out.data(), static_cast<std::size_t>(i), n);
}

}  // namespace omp

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n)) omp::gemm(a, b, c, m, k, n);
  else serial::gemm(a, b, c, m, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n)) omp::gemm_tn(a, b, c, m, k, n);
  else serial::gemm_tn(a, b, c, m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n)) omp::gemm_nt(a, b, c, m, k, n);
  else serial::gemm_nt(a, b, c, m, k, n);
}

void spmm(const CsrMatrix& a, std::span<const double> x, std::span<double> y, std::size_t f) {
  if (go_parallel(a.nnz() * f)) omp::spmm(a, x, y, f);
  else serial::spmm(a, x, y, f);
}

void row_softmax(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n) {
  if (go_parallel(m * n * 8)) omp::row_softmax(a, out, m, n);
  else serial::row_softmax(a, out, m, n);
}

}  // namespace fedsheaf::kernels
