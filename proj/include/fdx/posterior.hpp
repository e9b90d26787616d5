#pragma once
// Exact posterior computations for dependent z-values: brute-force
// enumeration over all 2^m state configurations (m <= 16) and the
// shared-factor quadrature for the exchangeable Gaussian model.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fdx/common.hpp"
#include "fdx/twogroup.hpp"

namespace fdx::posterior {

struct DependenceModel {
  double mu = 0.0;   // common alternative mean shift
  double rho = 0.0;  // equicorrelation in [0,1)
  double pi = 0.0;   // prior non-null probability
  // Optional block partition: blocks[i] is the block id of index i.
  // Correlation rho applies within blocks, zero across.
  std::optional<std::vector<int>> blocks;
  // Extra variance added to coordinate i when theta_i = 1
  // (Sigma + inflation * diag(theta)).
  double alt_var_inflation = 0.0;

  void validate() const;
};

struct PosteriorEnumeration {
  std::size_t m = 0;
  std::vector<double> config_prob;     // indexed by theta bitmask, sums to 1
  std::vector<double> marginal_lfdr;   // P(theta_i = 0 | z)

  // P( sum_{i in S} (1 - theta_i) > gamma * |S| | z ), exact.
  double exact_tail(std::span<const std::uint32_t> selection, double gamma) const;
};

// Full 2^m enumeration with the multivariate Gaussian likelihood.
// Throws capacity_error for m > 16, domain_error on singular covariance.
PosteriorEnumeration enumerate_posterior(std::span<const double> z,
                                         const DependenceModel& model);

// P(theta_i = 0 | z) under the fully exchangeable model (no blocks),
// computed by Gauss-Hermite quadrature over the shared factor; node
// count doubles from 64 until two successive counts agree to 1e-8.
twogroup::LfdrVector exchangeable_lfdr(std::span<const double> z,
                                       const DependenceModel& model);

// Nodes/weights for integrating f against the standard normal density:
// integral ~ sum_k weight[k] * f(node[k]).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule gauss_hermite_normal(int n);

}  // namespace fdx::posterior
