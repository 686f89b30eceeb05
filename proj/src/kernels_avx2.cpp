// AVX2/FMA kernels. Functions carry a target attribute instead of the whole
// translation unit being compiled with -mavx2, so nothing here can leak AVX
// instructions into inline code shared with other translation units.

#include "clqg/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define CLQG_HAVE_AVX2_KERNELS 1
#include <immintrin.h>
#else
#define CLQG_HAVE_AVX2_KERNELS 0
#endif

namespace clqg::kernels {

#if CLQG_HAVE_AVX2_KERNELS
namespace {

#define CLQG_AVX2 __attribute__((target("avx2,fma")))

CLQG_AVX2 inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

CLQG_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

CLQG_AVX2 float dot_f32(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

CLQG_AVX2 double dot_f64(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

CLQG_AVX2 void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 a = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(a, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

CLQG_AVX2 void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Register-blocked row kernel: 32 output columns live in four accumulators
// while the shared dimension streams through.
CLQG_AVX2 void gemm_nn_f32(std::size_t m, std::size_t n, std::size_t k, const float* a,
                           std::size_t lda, const float* b, std::size_t ldb, float* c,
                           std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * lda;
    float* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
      __m256 c0 = _mm256_loadu_ps(crow + j);
      __m256 c1 = _mm256_loadu_ps(crow + j + 8);
      __m256 c2 = _mm256_loadu_ps(crow + j + 16);
      __m256 c3 = _mm256_loadu_ps(crow + j + 24);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 s = _mm256_set1_ps(arow[p]);
        const float* brow = b + p * ldb + j;
        c0 = _mm256_fmadd_ps(s, _mm256_loadu_ps(brow), c0);
        c1 = _mm256_fmadd_ps(s, _mm256_loadu_ps(brow + 8), c1);
        c2 = _mm256_fmadd_ps(s, _mm256_loadu_ps(brow + 16), c2);
        c3 = _mm256_fmadd_ps(s, _mm256_loadu_ps(brow + 24), c3);
      }
      _mm256_storeu_ps(crow + j, c0);
      _mm256_storeu_ps(crow + j + 8, c1);
      _mm256_storeu_ps(crow + j + 16, c2);
      _mm256_storeu_ps(crow + j + 24, c3);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 c0 = _mm256_loadu_ps(crow + j);
      for (std::size_t p = 0; p < k; ++p) {
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(arow[p]), _mm256_loadu_ps(b + p * ldb + j), c0);
      }
      _mm256_storeu_ps(crow + j, c0);
    }
    for (; j < n; ++j) {
      float acc = crow[j];
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * ldb + j];
      crow[j] = acc;
    }
  }
}

CLQG_AVX2 void gemm_nn_f64(std::size_t m, std::size_t n, std::size_t k, const double* a,
                           std::size_t lda, const double* b, std::size_t ldb, double* c,
                           std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    double* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = _mm256_loadu_pd(crow + j);
      __m256d c1 = _mm256_loadu_pd(crow + j + 4);
      __m256d c2 = _mm256_loadu_pd(crow + j + 8);
      __m256d c3 = _mm256_loadu_pd(crow + j + 12);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d s = _mm256_set1_pd(arow[p]);
        const double* brow = b + p * ldb + j;
        c0 = _mm256_fmadd_pd(s, _mm256_loadu_pd(brow), c0);
        c1 = _mm256_fmadd_pd(s, _mm256_loadu_pd(brow + 4), c1);
        c2 = _mm256_fmadd_pd(s, _mm256_loadu_pd(brow + 8), c2);
        c3 = _mm256_fmadd_pd(s, _mm256_loadu_pd(brow + 12), c3);
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + 4, c1);
      _mm256_storeu_pd(crow + j + 8, c2);
      _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = _mm256_loadu_pd(crow + j);
      for (std::size_t p = 0; p < k; ++p) {
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(arow[p]), _mm256_loadu_pd(b + p * ldb + j), c0);
      }
      _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < n; ++j) {
      double acc = crow[j];
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * ldb + j];
      crow[j] = acc;
    }
  }
}

CLQG_AVX2 void gemm_nt_f32(std::size_t m, std::size_t n, std::size_t k, const float* a,
                           std::size_t lda, const float* b, std::size_t ldb, float* c,
                           std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot_f32(a + i * lda, b + j * ldb, k);
  }
}

CLQG_AVX2 void gemm_nt_f64(std::size_t m, std::size_t n, std::size_t k, const double* a,
                           std::size_t lda, const double* b, std::size_t ldb, double* c,
                           std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot_f64(a + i * lda, b + j * ldb, k);
  }
}

CLQG_AVX2 void gemm_tn_f32(std::size_t m, std::size_t n, std::size_t k, const float* a,
                           std::size_t lda, const float* b, std::size_t ldb, float* c,
                           std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    const float* arow = a + p * lda;
    const float* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      if (arow[i] == 0.0f) continue;
      axpy_f32(arow[i], brow, c + i * ldc, n);
    }
  }
}

CLQG_AVX2 void gemm_tn_f64(std::size_t m, std::size_t n, std::size_t k, const double* a,
                           std::size_t lda, const double* b, std::size_t ldb, double* c,
                           std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * lda;
    const double* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      if (arow[i] == 0.0) continue;
      axpy_f64(arow[i], brow, c + i * ldc, n);
    }
  }
}

#undef CLQG_AVX2

}  // namespace

bool avx2_available() {
  static const bool available = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return available;
}

template <>
const KernelTable<float>* avx2_kernels<float>() {
  static const KernelTable<float> table{&dot_f32, &axpy_f32, &gemm_nn_f32, &gemm_nt_f32,
                                        &gemm_tn_f32};
  return avx2_available() ? &table : nullptr;
}

template <>
const KernelTable<double>* avx2_kernels<double>() {
  static const KernelTable<double> table{&dot_f64, &axpy_f64, &gemm_nn_f64, &gemm_nt_f64,
                                         &gemm_tn_f64};
  return avx2_available() ? &table : nullptr;
}

#else

bool avx2_available() { return false; }

template <>
const KernelTable<float>* avx2_kernels<float>() {
  return nullptr;
}

template <>
const KernelTable<double>* avx2_kernels<double>() {
  return nullptr;
}

#endif

}  // namespace clqg::kernels
