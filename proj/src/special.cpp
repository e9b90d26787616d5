#include "fdx/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fdx/common.hpp"

namespace fdx::num {

double norm_pdf(double z, double mean, double sd) {
  const double u = (z - mean) / sd;
  return std::exp(-0.5 * u * u) / (sd * 2.5066282746310005024);
}

double norm_logpdf(double z, double mean, double sd) {
  const double u = (z - mean) / sd;
  return -0.5 * u * u - std::log(sd) - kLogSqrt2Pi;
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// Continued fraction for the incomplete beta (modified Lentz).
static double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double ibeta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw domain_error("ibeta: a,b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw domain_error("ibeta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double lnfront = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(lnfront);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double binomial_count_ge(std::int64_t n, double q, std::int64_t j) {
  if (j <= 0) return 1.0;
  if (j > n) return 0.0;
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return 1.0;
  if (n > 1024) {
    // P(X >= j) = I_q(j, n-j+1)
    return std::min(1.0, std::max(0.0, ibeta(static_cast<double>(j),
                                             static_cast<double>(n - j + 1), q)));
  }
  // Direct summation from j upward via the pmf recurrence.
  const double lg = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                    std::lgamma(n - j + 1.0) + j * std::log(q) +
                    (n - j) * std::log1p(-q);
  double term = std::exp(lg);
  const double ratio_base = q / (1.0 - q);
  KahanSum sum;
  for (std::int64_t i = j; i <= n; ++i) {
    sum.add(term);
    term *= ratio_base * static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  return std::min(1.0, std::max(0.0, sum.value()));
}

std::int64_t floor_scaled(double gamma, std::int64_t k) {
  if (k < 0) throw domain_error("floor_scaled: negative k");
  if (gamma < 0.0 || gamma >= 1.0) throw domain_error("floor_scaled: gamma outside [0,1)");
  if (gamma == 0.0 || k == 0) return 0;
  int e = 0;
  const double f = std::frexp(gamma, &e);  // gamma = f * 2^e, f in [0.5, 1)
  const auto mant = static_cast<std::int64_t>(std::ldexp(f, 53));  // exact
  const int shift = 53 - e;  // gamma = mant / 2^shift, shift >= 53 for gamma < 1
  const __int128 prod = static_cast<__int128>(mant) * k;
  if (shift >= 127) return 0;  // gamma*k < 1 for any representable k here
  return static_cast<std::int64_t>(prod >> shift);
}

bool count_exceeds(std::int64_t j, double gamma, std::int64_t k) {
  return j > floor_scaled(gamma, k);
}

std::int64_t strict_count_above(double t) {
  if (t < 0.0) throw domain_error("strict threshold must be >= 0");
  // ceil(t) for fractional t, t+1 for integer t: both are floor(t)+1.
  return static_cast<std::int64_t>(std::floor(t)) + 1;
}

}  // namespace fdx::num
