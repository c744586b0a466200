#include "loant/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define LOANT_HAVE_AVX2_TU 1
#include <immintrin.h>
#endif

namespace loant::kernels {

#if LOANT_HAVE_AVX2_TU

#define LOANT_AVX2 __attribute__((target("avx2,fma")))

namespace {

constexpr std::size_t kLanes = 4;

LOANT_AVX2 void add_avx2(std::size_t n, const double* a, const double* b,
                         double* out) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

LOANT_AVX2 void mul_avx2(std::size_t n, const double* a, const double* b,
                         double* out) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

LOANT_AVX2 void axpy_avx2(std::size_t n, double alpha, const double* x,
                          double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + kLanes);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + kLanes), y1);
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + kLanes, y1);
  }
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

LOANT_AVX2 void scale_avx2(std::size_t n, double alpha, const double* x,
                           double* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

LOANT_AVX2 double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

LOANT_AVX2 double dot_avx2(std::size_t n, const double* a, const double* b) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + kLanes),
                           _mm256_loadu_pd(b + i + kLanes), acc1);
  }
  for (; i + kLanes <= n; i += kLanes)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

LOANT_AVX2 void gemm_nn_avx2(std::size_t m, std::size_t k, std::size_t n,
                             const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(n, a[i * k + p], b + p * n, ci);
  }
}

LOANT_AVX2 void gemm_tn_avx2(std::size_t m, std::size_t k, std::size_t n,
                             const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy_avx2(n, ap[i], bp, c + i * n);
  }
}

LOANT_AVX2 void gemm_nt_avx2(std::size_t m, std::size_t k, std::size_t n,
                             const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += dot_avx2(k, a + i * k, b + j * k);
}

LOANT_AVX2 void adam_avx2(std::size_t n, double* w, const double* g, double* m,
                          double* v, const AdamParams& p) {
  const __m256d b1 = _mm256_set1_pd(p.beta1);
  const __m256d b2 = _mm256_set1_pd(p.beta2);
  const __m256d c1 = _mm256_set1_pd(1.0 - p.beta1);
  const __m256d c2 = _mm256_set1_pd(1.0 - p.beta2);
  const __m256d bias1 = _mm256_set1_pd(p.bias1);
  const __m256d bias2 = _mm256_set1_pd(p.bias2);
  const __m256d lr = _mm256_set1_pd(p.lr);
  const __m256d eps = _mm256_set1_pd(p.eps);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    __m256d mi = _mm256_mul_pd(b1, _mm256_loadu_pd(m + i));
    mi = _mm256_add_pd(mi, _mm256_mul_pd(c1, gi));
    __m256d vi = _mm256_mul_pd(b2, _mm256_loadu_pd(v + i));
    vi = _mm256_add_pd(vi, _mm256_mul_pd(_mm256_mul_pd(c2, gi), gi));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_div_pd(mi, bias1);
    const __m256d denom =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_div_pd(vi, bias2)), eps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, mhat), denom);
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), step));
  }
  if (i < n) scalar_table().adam(n - i, w + i, g + i, m + i, v + i, p);
}

constexpr KernelTable kAvx2{
    "avx2",       add_avx2,     mul_avx2,     axpy_avx2,
    scale_avx2,   dot_avx2,     gemm_nn_avx2, gemm_tn_avx2,
    gemm_nt_avx2, adam_avx2,
};

}  // namespace

const KernelTable* avx2_table() {
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2 : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace loant::kernels
