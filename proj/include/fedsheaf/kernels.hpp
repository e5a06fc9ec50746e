#pragma once

// Dense and sparse compute kernels. Each kernel exists in a serial reference
// form and an OpenMP form. Both forms evaluate every output entry with the
// same summation order, so their results are bit-identical; the tests rely on
// this and the benchmark compares their speed.

#include <cstddef>
#include <span>
#include <vector>

namespace fedsheaf::kernels {

/// Compressed sparse row matrix with double values.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }
};

namespace serial {
// c[m x n] = a[m x k] * b[k x n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// y[rows x f] = A * x[cols x f]
void spmm(const CsrMatrix& a, std::span<const double> x, std::span<double> y, std::size_t f);
void row_softmax(std::span<const double> a, std::span<double> out, std::size_t m, std::size_t n);
}  // namespace serial

namespace omp {
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void spmm(const CsrMatrix& a, std::span<const double> x, std::span<double> y, std::size_t f);
void row_softmax(std::span<const double> a, std::span<double> out, std::size_t m, std::size_t n);
}  // namespace omp

// Dispatching entry points: OpenMP when more than one thread is available,
// we are not already inside a parallel region, and the work is large enough.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void spmm(const CsrMatrix& a, std::span<const double> x, std::span<double> y, std::size_t f);
void row_softmax(std::span<const double> a, std::span<double> out, std::size_t m, std::size_t n);

/// Minimum multiply-add count before the dispatcher goes parallel.
inline constexpr std::size_t kParallelWorkThreshold = 1u << 15;

}  // namespace fedsheaf::kernels
