#include "fdx/pbd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "fdx/kernels.hpp"
#include "fdx/special.hpp"

namespace fdx::pbd {

namespace {

std::atomic<std::size_t> g_dc_cutoff{5000};

void validate(std::span<const double> p) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0))
      throw domain_error("success probability outside [0,1]");
  }
}

// Sequential convolution over p[lo..hi), ping-pong buffers.
std::vector<double> conv_range(std::span<const double> p, std::size_t lo,
                               std::size_t hi) {
  std::vector<double> a(hi - lo + 1), b(hi - lo + 1);
  a[0] = 1.0;
  std::size_t n = 1;
  double* cur = a.data();
  double* nxt = b.data();
  for (std::size_t i = lo; i < hi; ++i, ++n) {
    kern::conv_step(cur, n, p[i], nxt);
    std::swap(cur, nxt);
  }
  if (cur != a.data()) a.assign(cur, cur + n);
  a.resize(n);
  return a;
}

std::vector<double> conv_divide(std::span<const double> p, std::size_t lo,
                                std::size_t hi, std::size_t leaf) {
  if (hi - lo <= leaf) return conv_range(p, lo, hi);
  const std::size_t mid = lo + (hi - lo) / 2;
  const std::vector<double> left = conv_divide(p, lo, mid, leaf);
  const std::vector<double> right = conv_divide(p, mid, hi, leaf);
  std::vector<double> out(left.size() + right.size() - 1, 0.0);
  kern::conv_full(left.data(), left.size(), right.data(), right.size(), out.data());
  for (double& v : out) v = std::min(std::max(v, 0.0), 1.0);
  return out;
}

}  // namespace

std::size_t dc_cutoff() { return g_dc_cutoff.load(); }
void set_dc_cutoff(std::size_t k) { g_dc_cutoff.store(k); }

Pmf pmf_sequential(std::span<const double> p) {
  validate(p);
  if (p.empty()) return Pmf{{1.0}};
  return Pmf{conv_range(p, 0, p.size())};
}

Pmf pmf(std::span<const double> p) {
  validate(p);
  if (p.empty()) return Pmf{{1.0}};
  const std::size_t cutoff = g_dc_cutoff.load();
  if (p.size() <= cutoff) return Pmf{conv_range(p, 0, p.size())};
  return Pmf{conv_divide(p, 0, p.size(), std::max<std::size_t>(cutoff / 2, 64))};
}

double tail_count_ge(std::span<const double> mass, std::int64_t j_min) {
  if (j_min <= 0) return 1.0;
  if (static_cast<std::size_t>(j_min) >= mass.size()) return 0.0;
  KahanSum s;
  for (std::size_t j = static_cast<std::size_t>(j_min); j < mass.size(); ++j)
    s.add(mass[j]);
  return std::min(1.0, std::max(0.0, s.value()));
}

double tail_gt(const Pmf& d, double threshold) {
  return tail_count_ge(d.mass, num::strict_count_above(threshold));
}

double tail_gt(std::span<const double> p, double threshold) {
  if (threshold < 0.0) throw domain_error("tail threshold must be >= 0");
  return tail_gt(pmf(p), threshold);
}

double tail_gt_scaled(const Pmf& d, double gamma, std::int64_t k) {
  return tail_count_ge(d.mass, num::floor_scaled(gamma, k) + 1);
}

double binomial_tail_gt(std::int64_t k, double q, double threshold) {
  if (k < 1) throw domain_error("binomial: k must be >= 1");
  if (!(q >= 0.0 && q <= 1.0)) throw domain_error("binomial: q outside [0,1]");
  if (threshold < 0.0) throw domain_error("tail threshold must be >= 0");
  return num::binomial_count_ge(k, q, num::strict_count_above(threshold));
}

double binomial_tail_gt_scaled(std::int64_t k, double q, double gamma,
                               std::int64_t at) {
  if (!(q >= 0.0 && q <= 1.0)) throw domain_error("binomial: q outside [0,1]");
  return num::binomial_count_ge(k, q, num::floor_scaled(gamma, at) + 1);
}

double entropy_prefilter_threshold(const FdxLevel& level) {
  level.validate();
  const double gamma = level.gamma;
  const double target = std::log(1.0 / level.alpha);
  const auto entropy = [gamma](double e) {
    return gamma * std::log(gamma / e) +
           (1.0 - gamma) * std::log((1.0 - gamma) / (1.0 - e));
  };
  // H decreases from +inf to 0 as e runs over (0, gamma); find the largest
  // e with H(e) >= target. The root can sit many orders of magnitude below
  // gamma, so bisect in log(e) to 1e-10.
  double lo = std::log(std::numeric_limits<double>::min());
  double hi = std::log(gamma);
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (entropy(std::exp(mid)) >= target)
      lo = mid;
    else
      hi = mid;
  }
  return std::exp(lo);
}

}  // namespace fdx::pbd
