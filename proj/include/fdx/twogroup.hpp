#pragma once
// Two-group mixture model: oracle and data-driven lfdr, p-values,
// mixture EM with BIC model choice, and Efron-style empirical null.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fdx/common.hpp"

namespace fdx::twogroup {

struct GaussianComponent {
  double mean = 0.0;
  double sd = 1.0;
};

struct WeightedComponent {
  double weight = 0.0;
  double mean = 0.0;
  double sd = 1.0;
};

struct TwoGroupModel {
  double pi = 0.0;  // non-null proportion, in [0,1)
  GaussianComponent null_component;
  std::vector<WeightedComponent> alternatives;

  void validate() const;
};

// Per-hypothesis posterior null probabilities plus a stable ascending rank.
struct LfdrVector {
  std::vector<double> values;
  std::vector<std::uint32_t> rank;  // values[rank[j]] nondecreasing, ties by index

  std::size_t size() const { return values.size(); }
  // values gathered in rank order
  std::vector<double> sorted_values() const;
};

LfdrVector make_lfdr_vector(std::vector<double> values);

struct EmpiricalNull {
  double delta0 = 0.0;
  double sigma0 = 1.0;
  double pi0 = 1.0;
};

// Mixture density f(z) = (1-pi) f0(z) + pi f1(z), evaluated in batch.
std::vector<double> mixture_density(std::span<const double> z,
                                    const TwoGroupModel& model);

// Oracle lfdr: (1-pi) f0(z) / f(z), clamped to [0,1], stable rank.
LfdrVector lfdr_oracle(std::span<const double> z, const TwoGroupModel& model);

// Two-sided p-values 2*Phi(-|z - delta0|/sigma0).
std::vector<double> pvalue_from_z(std::span<const double> z,
                                  const GaussianComponent& null);

// ---------------------------------------------------------------------------
// Mixture EM
// ---------------------------------------------------------------------------
struct EmOptions {
  std::vector<int> candidates = {1, 2, 3, 4};  // BIC model sizes
  std::uint64_t seed = 0;
  int random_restarts = 5;
  int max_iter = 400;
  double rel_tol = 1e-8;
  // Guardrails against degenerate components; see fit_mixture_em.
  double sd_floor_frac = 0.015;
  double min_effective_count = 4.0;
};

// Fits Gaussian mixtures of each candidate size by EM (quantile-split
// k-means start, a center+tails start, and seeded random restarts; best
// log-likelihood kept), selects the size by BIC, and designates the
// heaviest component as the null (ties: mean closest to the data median).
// EM runs whose components collapse (sd below the floor or effective
// count below the minimum) are discarded; if every start of every
// candidate collapses, restarts are re-drawn up to 5 times before an
// estimation_error is thrown. Deterministic given the seed.
TwoGroupModel fit_mixture_em(std::span<const double> z, const EmOptions& opts = {});

// ---------------------------------------------------------------------------
// Empirical null
// ---------------------------------------------------------------------------
enum class NullFitMethod { mle, central_matching };

// Truncated-Gaussian fit on the central window (the interval holding
// central_fraction of the empirical mass around the mode). Windows much
// narrower than the default carry little scale information and can chase
// the uniform limit on flat-topped samples; 0.9 keeps the fit pinned
// while still excluding far tails.
EmpiricalNull fit_empirical_null(std::span<const double> z,
                                 double central_fraction = 0.9,
                                 NullFitMethod method = NullFitMethod::mle);

enum class DensityMethod { mixture, kernel };

struct LfdrEstimate {
  LfdrVector lfdr;
  std::vector<std::uint32_t> zero_density;  // indices where fhat vanished
};

// Data-driven lfdr pi0*f0/fhat with fhat either the EM mixture density or
// a binned Gaussian kernel density estimate (Silverman bandwidth).
LfdrEstimate lfdr_empirical(std::span<const double> z, const EmpiricalNull& null,
                            DensityMethod method, std::uint64_t seed = 0);

double silverman_bandwidth(std::span<const double> z);

// Binned Gaussian KDE evaluated back at the sample points.
std::vector<double> kde_density_at_points(std::span<const double> z,
                                          double bandwidth = 0.0);

}  // namespace fdx::twogroup
