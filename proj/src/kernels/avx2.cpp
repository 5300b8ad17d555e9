// Compiled with -mavx2 -mfma. Nothing here may run unless dispatch has
// confirmed the host supports both extensions.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "stzi/kernels.hpp"

namespace stzi::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline __m256d pow2(__m256d n) {
  // n is integral in [-1075, 1025]; split so each factor is a normal double.
  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m128i n1 = _mm_srai_epi32(ni, 1);
  const __m128i n2 = _mm_sub_epi32(ni, n1);
  const __m256i bias = _mm256_set1_epi64x(1023);
  const __m256i e1 = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n1), bias), 52);
  const __m256i e2 = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n2), bias), 52);
  return _mm256_mul_pd(_mm256_castsi256_pd(e1), _mm256_castsi256_pd(e2));
}

// exp via Cody-Waite reduction and a degree-13 Taylor polynomial on
// |r| <= ln2/2; truncation error is below 1e-17 relative.
inline __m256d exp4(__m256d x) {
  const __m256d hiLimit = _mm256_set1_pd(709.782712893384);
  const __m256d loLimit = _mm256_set1_pd(-745.1332191019411);
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, loLimit), hiLimit);
  const __m256d n =
      _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(1.4426950408889634)),
                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), xc);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

  static constexpr double c[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                 1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                 1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                 1.0 / 24.0,         1.0 / 6.0,         0.5,
                                 1.0,                1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (int k = 1; k < 14; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[k]));
  __m256d y = _mm256_mul_pd(p, pow2(n));

  y = _mm256_blendv_pd(y, _mm256_set1_pd(std::numeric_limits<double>::infinity()),
                       _mm256_cmp_pd(x, hiLimit, _CMP_GT_OQ));
  y = _mm256_blendv_pd(y, _mm256_setzero_pd(), _mm256_cmp_pd(x, loLimit, _CMP_LT_OQ));
  y = _mm256_blendv_pd(y, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
  return y;
}

void expAvx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

double sumAvx2(const double* x, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double dotAvx2(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpyAvx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

double maxAvx2(const double* x, std::size_t n) {
  __m256d m = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_loadu_pd(x + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  double r = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  for (; i < n; ++i) r = std::max(r, x[i]);
  return r;
}

double logMeanExpAvx2(const double* x, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  const double m = maxAvx2(x, n);
  if (!std::isfinite(m)) return m;
  const __m256d mv = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(_mm256_loadu_pd(x + i), mv)));
  double s = hsum(acc);
  for (; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s / static_cast<double>(n));
}

MeanVar meanVarAvx2(const double* x, std::size_t n) {
  if (n == 0) return {0.0, 0.0};
  const double mean = sumAvx2(x, n) / static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  const __m256d mv = _mm256_set1_pd(mean);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), mv);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double ss = hsum(acc);
  for (; i < n; ++i) ss += (x[i] - mean) * (x[i] - mean);
  return {mean, ss / static_cast<double>(n - 1)};
}

double logisticMeanAvx2(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d signMask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d negAbs = _mm256_or_pd(v, signMask);
    const __m256d e = exp4(negAbs);
    const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(one, e));
    const __m256d pos = _mm256_cmp_pd(v, _mm256_setzero_pd(), _CMP_GE_OQ);
    acc = _mm256_add_pd(acc, _mm256_blendv_pd(_mm256_mul_pd(e, inv), inv, pos));
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double e = std::exp(-std::abs(x[i]));
    s += x[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
  return s / static_cast<double>(n);
}

}  // namespace

extern const KernelTable kAvx2Table;
const KernelTable kAvx2Table{"avx2",          expAvx2,     sumAvx2,         dotAvx2, axpyAvx2,
                             logMeanExpAvx2,  meanVarAvx2, logisticMeanAvx2};

}  // namespace stzi::kernels
