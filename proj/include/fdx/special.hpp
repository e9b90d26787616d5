#pragma once
// Scalar numeric building blocks: Gaussian density/CDF, regularized
// incomplete beta (for large-n binomial tails), log-sum-exp, and the
// exact "count > gamma*k" comparison used throughout the decision rules.

#include <cstdint>
#include <span>

namespace fdx::num {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2*pi)

double norm_pdf(double z, double mean = 0.0, double sd = 1.0);
double norm_logpdf(double z, double mean = 0.0, double sd = 1.0);
// Phi(z) for the standard normal, via erfc.
double norm_cdf(double z);

// log(sum(exp(x))) with max subtraction; -inf for an empty span.
double log_sum_exp(std::span<const double> x);

// Regularized incomplete beta I_x(a,b), a,b > 0, x in [0,1].
// Continued-fraction (modified Lentz) evaluation, abs error ~1e-14.
double ibeta(double a, double b, double x);

// P(Binomial(n,q) >= j). Exact summation for small n, ibeta for large n.
double binomial_count_ge(std::int64_t n, double q, std::int64_t j);

// ---------------------------------------------------------------------------
// Exact threshold arithmetic.
//
// The strict comparison "j > gamma*k" treats gamma as the exact binary
// rational it is as a double: gamma = M / 2^S with integer M. The
// comparison j*2^S > M*k is then carried out in 128-bit integers, never
// with a floating tolerance.
// ---------------------------------------------------------------------------

// Exact floor(gamma * k) for gamma in [0,1), k >= 0.
std::int64_t floor_scaled(double gamma, std::int64_t k);

// Exact j > gamma*k.
bool count_exceeds(std::int64_t j, double gamma, std::int64_t k);

// Smallest integer count j with j > t, for a plain real threshold t >= 0:
// ceil(t) for non-integer t, t+1 for integer t.
std::int64_t strict_count_above(double t);

}  // namespace fdx::num
