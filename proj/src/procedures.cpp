#include "fdx/procedures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fdx/kernels.hpp"
#include "fdx/pbd.hpp"
#include "fdx/special.hpp"

namespace fdx::procedures {

namespace {

// Shortcut gates are widened by a hair so floating-point rounding can
// never eject a k that the exact Step-4 comparison would accept; the
// final PBD gate itself is unwidened.
constexpr double kGateSlack = 1e-9;

void validate_pvalues(std::span<const double> p) {
  for (double v : p)
    if (!(v > 0.0 && v <= 1.0)) throw domain_error("p-value outside (0,1]");
}

std::vector<std::uint32_t> sorted_order(std::span<const double> p) {
  std::vector<std::uint32_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return p[a] < p[b]; });
  return idx;
}

// Ascending incremental PBD sweep over the sorted lfdr prefix; fills
// tails[k] = P(PBD(p^(k)) > gamma*k) for k = 0..kmax. The convolution
// order is identical to pbd::pmf_sequential on each prefix, so the tails
// are bitwise equal to independently evaluated ones.
std::vector<double> prefix_tails(std::span<const double> sorted_vals, std::size_t kmax,
                                 double gamma) {
  std::vector<double> tails(kmax + 1, 0.0);
  std::vector<double> a(kmax + 1), b(kmax + 1);
  a[0] = 1.0;
  double* cur = a.data();
  double* nxt = b.data();
  std::size_t n = 1;
  for (std::size_t k = 1; k <= kmax; ++k, ++n) {
    kern::conv_step(cur, n, sorted_vals[k - 1], nxt);
    std::swap(cur, nxt);
    tails[k] = pbd::tail_count_ge({cur, n + 1},
                                  num::floor_scaled(gamma, static_cast<std::int64_t>(k)) + 1);
  }
  return tails;
}

void apply_randomization(RejectionResult& res, const twogroup::LfdrVector& lfdr,
                         const FdxLevel& level, const ProcedureOptions& opts,
                         double tail_next) {
  if (!opts.randomize) return;
  const std::size_t K = res.k_final;
  if (K >= lfdr.size()) return;
  const double num = level.alpha - res.tail_at_k;
  const double den = tail_next - res.tail_at_k;
  if (!(den > 0.0) || num < 0.0) return;  // degenerate: keep the deterministic K
  RandomizedExtra extra;
  extra.probability = std::min(1.0, num / den);
  extra.index = lfdr.rank[K];
  Rng rng(opts.seed);
  extra.extra_rejected = rng.uniform() < extra.probability;
  if (extra.extra_rejected) res.rejected.push_back(extra.index);
  res.randomized = extra;
}

RejectionResult build_result(const twogroup::LfdrVector& lfdr, std::size_t K,
                             std::size_t k1, std::size_t k2, double tail_at_k) {
  RejectionResult res;
  res.k_final = K;
  res.k1 = k1;
  res.k2 = k2;
  res.tail_at_k = tail_at_k;
  res.rejected.assign(lfdr.rank.begin(), lfdr.rank.begin() + K);
  return res;
}

}  // namespace

RejectionResult procedure1(const twogroup::LfdrVector& lfdr, const FdxLevel& level,
                           const ProcedureOptions& opts) {
  level.validate();
  const std::size_t m = lfdr.size();
  const auto sorted = lfdr.sorted_values();
  const auto tails = prefix_tails(sorted, m, level.gamma);
  std::size_t K = 0;
  for (std::size_t k = 1; k <= m; ++k)
    if (tails[k] <= level.alpha) K = k;
  auto res = build_result(lfdr, K, K, K, tails[K]);
  if (K < m) apply_randomization(res, lfdr, level, opts, tails[K + 1]);
  return res;
}

RejectionResult procedure1_full_scan(const twogroup::LfdrVector& lfdr,
                                     const FdxLevel& level,
                                     const ProcedureOptions& opts) {
  level.validate();
  const std::size_t m = lfdr.size();
  const auto sorted = lfdr.sorted_values();
  std::size_t K = 0;
  double tail_at_k = 0.0;
  double tail_next = 0.0;
  double prev_tail = 0.0;
  for (std::size_t k = m; k >= 1; --k) {
    const auto d = pbd::pmf_sequential({sorted.data(), k});
    const double t =
        pbd::tail_gt_scaled(d, level.gamma, static_cast<std::int64_t>(k));
    if (t <= level.alpha) {
      K = k;
      tail_at_k = t;
      tail_next = prev_tail;
      break;
    }
    prev_tail = t;
  }
  if (K == 0 && m > 0) {
    tail_next = prev_tail;  // tail at k = 1
  }
  auto res = build_result(lfdr, K, K, K, tail_at_k);
  if (K < m) apply_randomization(res, lfdr, level, opts, tail_next);
  return res;
}

RejectionResult procedure2(const twogroup::LfdrVector& lfdr, const FdxLevel& level,
                           const ProcedureOptions& opts) {
  level.validate();
  const std::size_t m = lfdr.size();
  const auto sorted = lfdr.sorted_values();
  const double gamma = level.gamma;
  const double alpha = level.alpha;

  // Step 2: running-mean bound at level alpha + gamma*(1-alpha).
  const double mean_gate = alpha + gamma * (1.0 - alpha) + kGateSlack;
  std::size_t K1 = 0;
  {
    KahanSum sum;
    for (std::size_t k = 1; k <= m; ++k) {
      sum.add(sorted[k - 1]);
      if (sum.value() <= mean_gate * static_cast<double>(k)) K1 = k;
    }
  }
  if (K1 == 0) {
    auto res = build_result(lfdr, 0, 0, 0, 0.0);
    if (m > 0) {
      const double t1 = sorted[0];  // PBD tail at k = 1 is T_(1)
      apply_randomization(res, lfdr, level, opts, t1);
    }
    return res;
  }

  // Step 3: geometric-mean binomial bound, descending scan from K1.
  std::vector<double> logsum(K1 + 1, 0.0);
  std::vector<std::size_t> zeros(K1 + 1, 0);
  {
    KahanSum ls;
    for (std::size_t k = 1; k <= K1; ++k) {
      zeros[k] = zeros[k - 1] + (sorted[k - 1] == 0.0 ? 1 : 0);
      if (sorted[k - 1] > 0.0) ls.add(std::log(sorted[k - 1]));
      logsum[k] = ls.value();
    }
  }
  std::size_t K2 = 0;
  for (std::size_t k = K1; k >= 1; --k) {
    double t;
    if (zeros[k] > 0) {
      t = 0.0;  // geometric mean is zero
    } else {
      const double gm = std::exp(logsum[k] / static_cast<double>(k));
      t = pbd::binomial_tail_gt_scaled(static_cast<std::int64_t>(k),
                                       std::min(gm, 1.0), gamma,
                                       static_cast<std::int64_t>(k));
    }
    if (t <= alpha + kGateSlack) {
      K2 = k;
      break;
    }
  }
  if (K2 == 0) {
    auto res = build_result(lfdr, 0, K1, 0, 0.0);
    apply_randomization(res, lfdr, level, opts, sorted[0]);
    return res;
  }

  // Step 4: exact PBD tails on the surviving prefix.
  const auto tails = prefix_tails(sorted, K2, gamma);
  std::size_t K = 0;
  for (std::size_t k = K2; k >= 1; --k) {
    if (tails[k] <= alpha) {
      K = k;
      break;
    }
  }
  auto res = build_result(lfdr, K, K1, K2, K > 0 ? tails[K] : 0.0);
  if (K < m) {
    double tail_next;
    if (K < K2) {
      tail_next = tails[K + 1];
    } else {
      const auto d = pbd::pmf_sequential({sorted.data(), K + 1});
      tail_next =
          pbd::tail_gt_scaled(d, gamma, static_cast<std::int64_t>(K + 1));
    }
    apply_randomization(res, lfdr, level, opts, tail_next);
  }
  return res;
}

std::vector<std::uint32_t> bh(std::span<const double> pvalues, double alpha_fdr) {
  validate_pvalues(pvalues);
  if (!(alpha_fdr > 0.0 && alpha_fdr < 1.0))
    throw domain_error("bh: alpha_fdr outside (0,1)");
  const std::size_t m = pvalues.size();
  const auto order = sorted_order(pvalues);
  std::size_t kstar = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    if (pvalues[order[k - 1]] <=
        static_cast<double>(k) * alpha_fdr / static_cast<double>(m))
      kstar = k;
  }
  return {order.begin(), order.begin() + kstar};
}

std::vector<std::uint32_t> sc_adaptive(const twogroup::LfdrVector& lfdr,
                                       double alpha_fdr) {
  if (!(alpha_fdr > 0.0 && alpha_fdr < 1.0))
    throw domain_error("sc_adaptive: alpha_fdr outside (0,1)");
  const auto sorted = lfdr.sorted_values();
  std::size_t kstar = 0;
  KahanSum sum;
  for (std::size_t k = 1; k <= sorted.size(); ++k) {
    sum.add(sorted[k - 1]);
    if (sum.value() <= alpha_fdr * static_cast<double>(k)) kstar = k;
  }
  return {lfdr.rank.begin(), lfdr.rank.begin() + kstar};
}

double lehmann_romano_critical(std::size_t i, std::size_t m, const FdxLevel& level) {
  level.validate();
  const auto fl = num::floor_scaled(level.gamma, static_cast<std::int64_t>(i));
  return static_cast<double>(fl + 1) * level.alpha /
         static_cast<double>(static_cast<std::int64_t>(m) + fl + 1 -
                             static_cast<std::int64_t>(i));
}

std::vector<std::uint32_t> lehmann_romano(std::span<const double> pvalues,
                                          const FdxLevel& level) {
  validate_pvalues(pvalues);
  level.validate();
  const std::size_t m = pvalues.size();
  const auto order = sorted_order(pvalues);
  std::size_t nrej = 0;
  for (std::size_t i = 1; i <= m; ++i) {
    if (pvalues[order[i - 1]] <= lehmann_romano_critical(i, m, level))
      nrej = i;
    else
      break;
  }
  return {order.begin(), order.begin() + nrej};
}

double guo_romano_critical(std::size_t i, std::size_t m, const FdxLevel& level) {
  level.validate();
  const auto fl = num::floor_scaled(level.gamma, static_cast<std::int64_t>(i));
  const std::int64_t j = fl + 1;
  const std::int64_t n = static_cast<std::int64_t>(m) - static_cast<std::int64_t>(i) + fl + 1;
  if (j > n) return 1.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (num::binomial_count_ge(n, mid, j) <= level.alpha)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

std::vector<std::uint32_t> guo_romano(std::span<const double> pvalues,
                                      const FdxLevel& level) {
  validate_pvalues(pvalues);
  level.validate();
  const std::size_t m = pvalues.size();
  const auto order = sorted_order(pvalues);
  std::size_t nrej = 0;
  for (std::size_t i = 1; i <= m; ++i) {
    if (pvalues[order[i - 1]] <= guo_romano_critical(i, m, level))
      nrej = i;
    else
      break;
  }
  return {order.begin(), order.begin() + nrej};
}

}  // namespace fdx::procedures
