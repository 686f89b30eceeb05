#include "clqg/kernels.hpp"

namespace clqg::kernels {
namespace {

template <typename Real>
Real dot(const Real* x, const Real* y, std::size_t n) {
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * ldc;
    const Real* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const Real s = arow[p];
      const Real* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot(a + i * lda, b + j * ldb, k);
    }
  }
}

template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    const Real* arow = a + p * lda;
    const Real* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const Real s = arow[i];
      if (s == Real(0)) continue;
      Real* crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

}  // namespace

template <typename Real>
const KernelTable<Real>& scalar_kernels() {
  static const KernelTable<Real> table{&dot<Real>, &axpy<Real>, &gemm_nn<Real>, &gemm_nt<Real>,
                                       &gemm_tn<Real>};
  return table;
}

template const KernelTable<float>& scalar_kernels<float>();
template const KernelTable<double>& scalar_kernels<double>();

}  // namespace clqg::kernels
