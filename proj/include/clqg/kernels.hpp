#pragma once

// Dense arithmetic inner loops used by the tensor library.
//
// Every kernel exists as a portable scalar reference and, on x86-64, as an
// AVX2/FMA variant. The active backend is chosen once at startup from the
// CPU feature flags (override with CLQG_KERNELS=scalar) and can be switched
// explicitly for equivalence testing.
//
// All matrices are row-major with an explicit leading dimension. Every
// output element depends only on its own row of the left operand, so results
// for a row are identical no matter how many rows are processed together.

#include <cstddef>
#include <string_view>

namespace clqg::kernels {

enum class Backend { scalar, avx2 };

template <typename Real>
struct KernelTable {
  // sum_i x[i] * y[i]
  Real (*dot)(const Real* x, const Real* y, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(Real alpha, const Real* x, Real* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
                  const Real* b, std::size_t ldb, Real* c, std::size_t ldc);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
                  const Real* b, std::size_t ldb, Real* c, std::size_t ldc);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
                  const Real* b, std::size_t ldb, Real* c, std::size_t ldc);
};

template <typename Real>
const KernelTable<Real>& scalar_kernels();

/// Null when the build target or the running CPU lacks AVX2+FMA.
template <typename Real>
const KernelTable<Real>* avx2_kernels();

bool avx2_available();

Backend active_backend();
/// Falls back to scalar (and returns false) when the request is unavailable.
bool set_backend(Backend backend);
std::string_view backend_name(Backend backend);

template <typename Real>
const KernelTable<Real>& active();

/// Restores the previously active backend on destruction.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : previous_(active_backend()) { set_backend(backend); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

}  // namespace clqg::kernels
