#include "fdx/posterior.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fdx/special.hpp"

namespace fdx::posterior {

namespace {

constexpr std::size_t kMaxEnum = 16;

// Dense Cholesky, row-major, for the small covariance matrices here.
// Returns false when the matrix is not positive definite.
bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (s <= 0.0) return false;
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
  }
  return true;
}

// log N(x; mean, Sigma) with Sigma given by its Cholesky factor L.
double mvn_logpdf(std::span<const double> x, std::span<const double> mean,
                  const std::vector<double>& L, std::size_t n) {
  double quad = 0.0, logdet = 0.0;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i] - mean[i];
    for (std::size_t k = 0; k < i; ++k) s -= L[i * n + k] * y[k];
    y[i] = s / L[i * n + i];
    quad += y[i] * y[i];
    logdet += std::log(L[i * n + i]);
  }
  return -0.5 * quad - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

}  // namespace

void DependenceModel::validate() const {
  if (!(rho >= 0.0 && rho < 1.0)) throw domain_error("DependenceModel: rho outside [0,1)");
  if (!(pi >= 0.0 && pi < 1.0)) throw domain_error("DependenceModel: pi outside [0,1)");
  if (alt_var_inflation < 0.0)
    throw domain_error("DependenceModel: negative variance inflation");
}

double PosteriorEnumeration::exact_tail(std::span<const std::uint32_t> selection,
                                        double gamma) const {
  if (selection.empty()) return 0.0;
  std::uint32_t smask = 0;
  for (auto i : selection) {
    if (i >= m) throw domain_error("exact_tail: index out of range");
    smask |= 1u << i;
  }
  const auto ssize = static_cast<std::int64_t>(selection.size());
  KahanSum tail;
  for (std::size_t mask = 0; mask < config_prob.size(); ++mask) {
    const auto false_count =
        ssize - std::popcount(static_cast<std::uint32_t>(mask) & smask);
    if (num::count_exceeds(false_count, gamma, ssize)) tail.add(config_prob[mask]);
  }
  return std::min(1.0, std::max(0.0, tail.value()));
}

PosteriorEnumeration enumerate_posterior(std::span<const double> z,
                                         const DependenceModel& model) {
  model.validate();
  const std::size_t m = z.size();
  if (m == 0) throw domain_error("enumerate_posterior: empty z");
  if (m > kMaxEnum) throw capacity_error("enumerate_posterior: m > 16");
  for (double v : z)
    if (!std::isfinite(v)) throw domain_error("z-value is not finite");
  if (model.blocks && model.blocks->size() != m)
    throw domain_error("enumerate_posterior: blocks do not partition [m]");

  const std::size_t n_cfg = std::size_t{1} << m;
  std::vector<double> logpost(n_cfg);
  const double logpi = model.pi > 0.0 ? std::log(model.pi)
                                      : -std::numeric_limits<double>::infinity();
  const double log1mpi = std::log1p(-model.pi);

  std::vector<double> sigma(m * m), mean(m);
  for (std::size_t mask = 0; mask < n_cfg; ++mask) {
    // prior
    const int ones = std::popcount(mask);
    double lp = (ones > 0 ? ones * logpi : 0.0) +
                (static_cast<int>(m) - ones) * log1mpi;
    if (std::isfinite(lp)) {
      // covariance for this configuration
      for (std::size_t i = 0; i < m; ++i) {
        const bool ti = (mask >> i) & 1u;
        mean[i] = ti ? model.mu : 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          double v;
          if (i == j) {
            v = 1.0 + (ti ? model.alt_var_inflation : 0.0);
          } else if (!model.blocks) {
            v = model.rho;
          } else {
            v = ((*model.blocks)[i] == (*model.blocks)[j]) ? model.rho : 0.0;
          }
          sigma[i * m + j] = v;
        }
      }
      if (!cholesky(sigma, m))
        throw domain_error("enumerate_posterior: covariance not positive definite");
      lp += mvn_logpdf(z, mean, sigma, m);
    }
    logpost[mask] = lp;
  }

  const double lz = num::log_sum_exp(logpost);
  PosteriorEnumeration out;
  out.m = m;
  out.config_prob.resize(n_cfg);
  for (std::size_t mask = 0; mask < n_cfg; ++mask)
    out.config_prob[mask] = std::exp(logpost[mask] - lz);

  out.marginal_lfdr.assign(m, 0.0);
  for (std::size_t mask = 0; mask < n_cfg; ++mask) {
    const double p = out.config_prob[mask];
    for (std::size_t i = 0; i < m; ++i)
      if (!((mask >> i) & 1u)) out.marginal_lfdr[i] += p;
  }
  for (double& v : out.marginal_lfdr) v = std::min(1.0, std::max(0.0, v));
  return out;
}

// ---------------------------------------------------------------------------
// Gauss-Hermite
// ---------------------------------------------------------------------------
namespace {

// Normalized Hermite function psi_n = pi^{-1/4} e^{-x^2/2} H~_n(x): same
// roots as the orthonormal polynomial H~_n but bounded everywhere, so the
// recurrence never overflows at large n or x. Returns (psi_n, psi_{n-1}).
std::pair<double, double> hermite_fn(int n, double x) {
  double p0 = 0.7511255444649425 * std::exp(-0.5 * x * x);
  double p1 = 0.0;
  for (int j = 1; j <= n; ++j) {
    const double p2 = p1;
    p1 = p0;
    p0 = x * std::sqrt(2.0 / j) * p1 - std::sqrt((j - 1.0) / j) * p2;
  }
  return {p0, p1};
}

}  // namespace

QuadratureRule gauss_hermite_normal(int n) {
  if (n < 1) throw domain_error("gauss_hermite_normal: n < 1");
  if (n > 512) throw domain_error("gauss_hermite_normal: n > 512");
  // Bracket every root of psi_n on a grid finer than the minimal root
  // spacing, then bisect. All roots lie inside |x| < sqrt(2n+1).
  const double reach = std::sqrt(2.0 * n + 1.0);
  const double step = 1.3 / reach;  // min spacing is ~pi/sqrt(2n+1)
  QuadratureRule rule;
  rule.nodes.reserve(n);
  rule.weights.reserve(n);

  double x_prev = -reach - 0.5;
  double f_prev = hermite_fn(n, x_prev).first;
  for (double x = x_prev + step; x_prev < reach + 0.5;
       x_prev = x, x += step) {
    double f = hermite_fn(n, x).first;
    if (f_prev == 0.0) {
      f_prev = f;
      continue;
    }
    if ((f_prev < 0.0) != (f < 0.0)) {
      double lo = x_prev, hi = x;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = hermite_fn(n, mid).first;
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((fm < 0.0) == (f_prev < 0.0))
          lo = mid;
        else
          hi = mid;
        if (hi - lo < 1e-15 * (1.0 + std::abs(mid))) break;
      }
      const double root = 0.5 * (lo + hi);
      // w_k = 1/(n H~_{n-1}^2) with H~_{n-1} = psi_{n-1} e^{x^2/2}; the
      // extreme nodes underflow to zero weight, which is harmless here
      const double pm1 = hermite_fn(n, root).second;
      rule.nodes.push_back(root);
      rule.weights.push_back(std::exp(-root * root) / (n * pm1 * pm1));
    }
    f_prev = f;
  }
  if (static_cast<int>(rule.nodes.size()) != n)
    throw estimation_error("gauss_hermite_normal: root bracketing failed");

  // Convert from weight e^{-x^2} to the standard normal: t = sqrt(2) x,
  // weights absorb 1/sqrt(pi).
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] *= std::numbers::sqrt2;
    rule.weights[i] *= 0.5641895835477562869;  // 1/sqrt(pi)
  }
  return rule;
}

namespace {

std::vector<double> exchangeable_lfdr_at(std::span<const double> z,
                                         const DependenceModel& model, int n_nodes) {
  const std::size_t m = z.size();
  const auto rule = gauss_hermite_normal(n_nodes);
  const double sr = std::sqrt(model.rho);
  const double cond_sd = std::sqrt(1.0 - model.rho);
  const double logpi = model.pi > 0.0 ? std::log(model.pi)
                                      : -std::numeric_limits<double>::infinity();
  const double log1mpi = std::log1p(-model.pi);

  const std::size_t K = rule.nodes.size();
  std::vector<double> logG(K);               // log prod_j g_j(w_k)
  std::vector<std::vector<double>> r0(K);    // null share per coordinate
  for (std::size_t k = 0; k < K; ++k) {
    const double w = rule.nodes[k];
    r0[k].resize(m);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double l0 = log1mpi + num::norm_logpdf(z[j], sr * w, cond_sd);
      const double l1 = logpi + num::norm_logpdf(z[j], model.mu + sr * w, cond_sd);
      const double mx = std::max(l0, l1);
      const double s0 = std::exp(l0 - mx);
      const double s1 = std::isfinite(l1) ? std::exp(l1 - mx) : 0.0;
      acc += mx + std::log(s0 + s1);
      r0[k][j] = s0 / (s0 + s1);
    }
    logG[k] = acc;
  }
  const double mx = *std::max_element(logG.begin(), logG.end());
  double den = 0.0;
  std::vector<double> num(m, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double wk = rule.weights[k] * std::exp(logG[k] - mx);
    den += wk;
    for (std::size_t j = 0; j < m; ++j) num[j] += wk * r0[k][j];
  }
  std::vector<double> out(m);
  for (std::size_t j = 0; j < m; ++j)
    out[j] = std::min(1.0, std::max(0.0, num[j] / den));
  return out;
}

}  // namespace

twogroup::LfdrVector exchangeable_lfdr(std::span<const double> z,
                                       const DependenceModel& model) {
  model.validate();
  if (model.blocks) throw domain_error("exchangeable_lfdr: blocks not supported");
  for (double v : z)
    if (!std::isfinite(v)) throw domain_error("z-value is not finite");
  if (z.empty()) return twogroup::make_lfdr_vector({});

  std::vector<double> prev = exchangeable_lfdr_at(z, model, 64);
  for (int n = 128; n <= 512; n *= 2) {
    std::vector<double> cur = exchangeable_lfdr_at(z, model, n);
    double diff = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i)
      diff = std::max(diff, std::abs(cur[i] - prev[i]));
    prev = std::move(cur);
    if (diff < 1e-8) break;
  }
  return twogroup::make_lfdr_vector(std::move(prev));
}

}  // namespace fdx::posterior
