#pragma once
// Poisson-binomial distribution: exact pmf by sequential Bernoulli
// convolution, strict-count tail probabilities, binomial comparisons,
// and the relative-entropy prefilter threshold.

#include <cstdint>
#include <span>
#include <vector>

#include "fdx/common.hpp"

namespace fdx::pbd {

// pmf over counts 0..k for a vector of k success probabilities.
struct Pmf {
  std::vector<double> mass;

  std::size_t trials() const { return mass.size() - 1; }
};

// Length above which pmf() switches to divide-and-conquer convolution.
// Results match sequential convolution to < 1e-10 total variation.
std::size_t dc_cutoff();
void set_dc_cutoff(std::size_t k);

// Exact pmf. Throws domain_error if any entry is outside [0,1].
Pmf pmf(std::span<const double> p);

// Sequential-convolution-only path (used as cross-check and by callers
// that need bit-reproducible sharing of convolution prefixes).
Pmf pmf_sequential(std::span<const double> p);

// P(X > threshold) with strict integer-count semantics: the tail sums
// counts j >= floor(threshold)+1. threshold must be >= 0.
double tail_gt(const Pmf& d, double threshold);
double tail_gt(std::span<const double> p, double threshold);

// P(X > gamma*k) where gamma*k is compared exactly as a binary rational.
double tail_gt_scaled(const Pmf& d, double gamma, std::int64_t k);

// Tail mass over counts >= j_min (shared by the procedures' incremental
// scans so tails are bitwise identical across call paths).
double tail_count_ge(std::span<const double> mass, std::int64_t j_min);

// P(Binomial(k,q) > threshold), same strict-count semantics.
double binomial_tail_gt(std::int64_t k, double q, double threshold);
double binomial_tail_gt_scaled(std::int64_t k, double q, double gamma,
                               std::int64_t at);

// Largest eps' in (0, gamma) with exp(-H(gamma, eps')) <= alpha, where H
// is the relative entropy between an eps'- and a gamma-coin; bisection to
// 1e-10. Hypotheses with lfdr <= eps' pass the PBD tail condition at
// every k, so they are safely rejectable in bulk; the threshold is a
// diagnostic only and is never wired into the decision path.
double entropy_prefilter_threshold(const FdxLevel& level);

}  // namespace fdx::pbd
