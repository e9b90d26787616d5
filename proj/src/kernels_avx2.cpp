// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be entered after the dispatcher has
// verified CPU support.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "fdx/kernels.hpp"
#include "fdx/special.hpp"

namespace fdx::kern::detail {

void conv_step_avx2(const double* in, std::size_t n, double p, double* out) {
  const double q = 1.0 - p;
  const __m256d vp = _mm256_set1_pd(p);
  const __m256d vq = _mm256_set1_pd(q);
  const __m256d one = _mm256_set1_pd(1.0);
  out[0] = std::min(in[0] * q, 1.0);
  std::size_t j = 1;
  for (; j + 4 <= n; j += 4) {
    const __m256d cur = _mm256_loadu_pd(in + j);
    const __m256d prev = _mm256_loadu_pd(in + j - 1);
    const __m256d v = _mm256_fmadd_pd(cur, vq, _mm256_mul_pd(prev, vp));
    _mm256_storeu_pd(out + j, _mm256_min_pd(v, one));
  }
  for (; j < n; ++j) out[j] = std::min(in[j] * q + in[j - 1] * p, 1.0);
  out[n] = std::min(in[n - 1] * p, 1.0);
}

void conv_full_avx2(const double* a, std::size_t na, const double* b,
                    std::size_t nb, double* out) {
  for (std::size_t i = 0; i < na; ++i) {
    const __m256d ai = _mm256_set1_pd(a[i]);
    double* o = out + i;
    std::size_t j = 0;
    for (; j + 4 <= nb; j += 4) {
      const __m256d acc = _mm256_fmadd_pd(ai, _mm256_loadu_pd(b + j),
                                          _mm256_loadu_pd(o + j));
      _mm256_storeu_pd(o + j, acc);
    }
    for (; j < nb; ++j) o[j] += a[i] * b[j];
  }
}

// ---------------------------------------------------------------------------
// Vector exp, Cephes-style: x = n*ln2 + r, exp(r) by a rational minimax
// approximant on |r| <= ln2/2, scale by 2^n through the exponent bits.
// ---------------------------------------------------------------------------
namespace {

constexpr double kLog2E = 1.4426950408889634074;
constexpr double kLn2Hi = 6.93145751953125e-1;
constexpr double kLn2Lo = 1.42860682030941723212e-6;
constexpr double kExpLo = -708.396418532264106;  // below: flush to 0
constexpr double kExpHi = 709.0;                 // above: saturate to +inf
constexpr double kMagic = 6755399441055744.0;    // 1.5 * 2^52

constexpr double kP0 = 1.26177193074810590878e-4;
constexpr double kP1 = 3.02994407707441961300e-2;
constexpr double kP2 = 9.99999999999999999910e-1;
constexpr double kQ0 = 3.00198505138664455042e-6;
constexpr double kQ1 = 2.52448340349684104192e-3;
constexpr double kQ2 = 2.27265548208155028766e-1;
constexpr double kQ3 = 2.00000000000000000005e0;

inline __m256d exp4(__m256d x) {
  const __m256d lo_mask = _mm256_cmp_pd(x, _mm256_set1_pd(kExpLo), _CMP_LT_OQ);
  const __m256d hi_mask = _mm256_cmp_pd(x, _mm256_set1_pd(kExpHi), _CMP_GT_OQ);
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(kExpLo)),
                                   _mm256_set1_pd(kExpHi));

  const __m256d nf = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(kLog2E)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(nf, _mm256_set1_pd(kLn2Hi), xc);
  r = _mm256_fnmadd_pd(nf, _mm256_set1_pd(kLn2Lo), r);
  const __m256d r2 = _mm256_mul_pd(r, r);

  __m256d px = _mm256_fmadd_pd(_mm256_set1_pd(kP0), r2, _mm256_set1_pd(kP1));
  px = _mm256_fmadd_pd(px, r2, _mm256_set1_pd(kP2));
  px = _mm256_mul_pd(px, r);
  __m256d qx = _mm256_fmadd_pd(_mm256_set1_pd(kQ0), r2, _mm256_set1_pd(kQ1));
  qx = _mm256_fmadd_pd(qx, r2, _mm256_set1_pd(kQ2));
  qx = _mm256_fmadd_pd(qx, r2, _mm256_set1_pd(kQ3));
  const __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  __m256d y = _mm256_fmadd_pd(e, _mm256_set1_pd(2.0), _mm256_set1_pd(1.0));

  // 2^n via the exponent field; |n| <= 1024 here.
  const __m256d t = _mm256_add_pd(nf, _mm256_set1_pd(kMagic));
  const __m256i n64 = _mm256_sub_epi64(_mm256_castpd_si256(t),
                                       _mm256_castpd_si256(_mm256_set1_pd(kMagic)));
  const __m256i expo = _mm256_slli_epi64(
      _mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  y = _mm256_mul_pd(y, _mm256_castsi256_pd(expo));

  y = _mm256_blendv_pd(y, _mm256_setzero_pd(), lo_mask);
  y = _mm256_blendv_pd(y, _mm256_set1_pd(HUGE_VAL), hi_mask);
  return y;
}

}  // namespace

void exp_batch_avx2(const double* x, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double buf[4] = {0, 0, 0, 0};
    for (std::size_t k = i; k < n; ++k) buf[k - i] = x[k];
    alignas(32) double res[4];
    _mm256_store_pd(res, exp4(_mm256_load_pd(buf)));
    for (std::size_t k = i; k < n; ++k) out[k] = res[k - i];
  }
}

void gauss_logpdf_batch_avx2(const double* z, std::size_t n, double mean,
                             double sd, double* out) {
  const double inv = 1.0 / sd;
  const double c = -std::log(sd) - fdx::num::kLogSqrt2Pi;
  const __m256d vm = _mm256_set1_pd(mean);
  const __m256d vi = _mm256_set1_pd(inv);
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vh = _mm256_set1_pd(-0.5);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d u = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(z + i), vm), vi);
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_mul_pd(u, u), vh, vc));
  }
  for (; i < n; ++i) {
    const double u = (z[i] - mean) * inv;
    out[i] = -0.5 * u * u + c;
  }
}

}  // namespace fdx::kern::detail

#endif  // x86_64
