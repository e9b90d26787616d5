#include "fdx/twogroup.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>

#include "fdx/kernels.hpp"
#include "fdx/special.hpp"

namespace fdx::twogroup {

namespace {

void require_finite(std::span<const double> z) {
  for (double v : z)
    if (!std::isfinite(v)) throw domain_error("z-value is not finite");
}

double sample_sd(std::span<const double> z) {
  const double m = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
  double s = 0.0;
  for (double v : z) s += (v - m) * (v - m);
  return std::sqrt(s / z.size());
}

// ---------------------------------------------------------------------------
// Log-space mixture evaluation shared by lfdr, density and the EM E-step.
// ---------------------------------------------------------------------------
struct MixComp {
  double logw;
  double mean;
  double sd;
};

// Fills resp[g] with exp(lp_g - mx) and total[i] = sum_g resp[g][i];
// mx[i] is the per-point max of lp_g. Components with logw = -inf are
// evaluated as identically zero.
void mixture_estep(std::span<const double> z, const std::vector<MixComp>& comps,
                   std::vector<std::vector<double>>& resp, std::vector<double>& mx,
                   std::vector<double>& total) {
  const std::size_t n = z.size();
  const std::size_t G = comps.size();
  resp.resize(G);
  for (auto& r : resp) r.assign(n, 0.0);
  mx.assign(n, -std::numeric_limits<double>::infinity());
  total.assign(n, 0.0);

  for (std::size_t g = 0; g < G; ++g) {
    if (!std::isfinite(comps[g].logw)) continue;
    kern::gauss_logpdf_batch(z.data(), n, comps[g].mean, comps[g].sd,
                             resp[g].data());
    const double lw = comps[g].logw;
    double* rg = resp[g].data();
    for (std::size_t i = 0; i < n; ++i) rg[i] += lw;
    for (std::size_t i = 0; i < n; ++i) mx[i] = std::max(mx[i], rg[i]);
  }
  for (std::size_t g = 0; g < G; ++g) {
    if (!std::isfinite(comps[g].logw)) continue;
    double* rg = resp[g].data();
    for (std::size_t i = 0; i < n; ++i) rg[i] -= mx[i];
    kern::exp_batch(rg, n, rg);
    for (std::size_t i = 0; i < n; ++i) total[i] += rg[i];
  }
}

std::vector<MixComp> model_components(const TwoGroupModel& model) {
  std::vector<MixComp> comps;
  const double p0 = 1.0 - model.pi;
  comps.push_back({p0 > 0.0 ? std::log(p0) : -std::numeric_limits<double>::infinity(),
                   model.null_component.mean, model.null_component.sd});
  for (const auto& a : model.alternatives) {
    const double w = model.pi * a.weight;
    comps.push_back({w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity(),
                     a.mean, a.sd});
  }
  return comps;
}

}  // namespace

void TwoGroupModel::validate() const {
  if (!(pi >= 0.0 && pi < 1.0)) throw domain_error("TwoGroupModel: pi outside [0,1)");
  if (!(null_component.sd > 0.0)) throw domain_error("TwoGroupModel: null sd <= 0");
  double wsum = 0.0;
  for (const auto& a : alternatives) {
    if (!(a.sd > 0.0)) throw domain_error("TwoGroupModel: alternative sd <= 0");
    if (!(a.weight >= 0.0)) throw domain_error("TwoGroupModel: negative weight");
    wsum += a.weight;
  }
  if (pi > 0.0 && std::abs(wsum - 1.0) > 1e-9)
    throw domain_error("TwoGroupModel: alternative weights must sum to 1");
}

std::vector<double> LfdrVector::sorted_values() const {
  std::vector<double> s(values.size());
  for (std::size_t j = 0; j < rank.size(); ++j) s[j] = values[rank[j]];
  return s;
}

LfdrVector make_lfdr_vector(std::vector<double> values) {
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0)) throw domain_error("lfdr value outside [0,1]");
  LfdrVector out;
  out.rank.resize(values.size());
  std::iota(out.rank.begin(), out.rank.end(), 0u);
  std::stable_sort(out.rank.begin(), out.rank.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return values[a] < values[b];
                   });
  out.values = std::move(values);
  return out;
}

std::vector<double> mixture_density(std::span<const double> z,
                                    const TwoGroupModel& model) {
  model.validate();
  require_finite(z);
  const auto comps = model_components(model);
  std::vector<std::vector<double>> resp;
  std::vector<double> mx, total;
  mixture_estep(z, comps, resp, mx, total);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    out[i] = std::exp(mx[i]) * total[i];
  return out;
}

LfdrVector lfdr_oracle(std::span<const double> z, const TwoGroupModel& model) {
  model.validate();
  require_finite(z);
  if (model.pi == 0.0)
    return make_lfdr_vector(std::vector<double>(z.size(), 1.0));

  const auto comps = model_components(model);
  std::vector<std::vector<double>> resp;
  std::vector<double> mx, total;
  mixture_estep(z, comps, resp, mx, total);
  std::vector<double> values(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = resp[0][i] / total[i];
    values[i] = std::min(1.0, std::max(0.0, v));
  }
  return make_lfdr_vector(std::move(values));
}

std::vector<double> pvalue_from_z(std::span<const double> z,
                                  const GaussianComponent& null) {
  if (!(null.sd > 0.0)) throw domain_error("pvalue_from_z: null sd <= 0");
  require_finite(z);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double u = std::abs(z[i] - null.mean) / null.sd;
    p[i] = std::max(2.0 * num::norm_cdf(-u), std::numeric_limits<double>::min());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Mixture EM
// ---------------------------------------------------------------------------
namespace {

struct EmFit {
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<double> w, mean, sd;
};

struct EmStart {
  std::vector<double> w, mean, sd;
};

// One-dimensional k-means refinement of initial centers.
std::vector<double> kmeans_1d(std::span<const double> z, std::vector<double> centers,
                              int iters = 25) {
  const int G = static_cast<int>(centers.size());
  std::vector<double> sums(G), counts(G);
  for (int it = 0; it < iters; ++it) {
    std::sort(centers.begin(), centers.end());
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (double v : z) {
      int best = 0;
      double bd = std::abs(v - centers[0]);
      for (int g = 1; g < G; ++g) {
        const double d = std::abs(v - centers[g]);
        if (d < bd) {
          bd = d;
          best = g;
        }
      }
      sums[best] += v;
      counts[best] += 1.0;
    }
    bool moved = false;
    for (int g = 0; g < G; ++g) {
      if (counts[g] == 0.0) continue;
      const double c = sums[g] / counts[g];
      if (std::abs(c - centers[g]) > 1e-12) moved = true;
      centers[g] = c;
    }
    if (!moved) break;
  }
  return centers;
}

EmStart moments_from_centers(std::span<const double> z,
                             const std::vector<double>& centers, double fallback_sd) {
  const int G = static_cast<int>(centers.size());
  EmStart s;
  s.w.assign(G, 0.0);
  s.mean = centers;
  s.sd.assign(G, fallback_sd);
  std::vector<double> ss(G, 0.0);
  for (double v : z) {
    int best = 0;
    double bd = std::abs(v - centers[0]);
    for (int g = 1; g < G; ++g) {
      const double d = std::abs(v - centers[g]);
      if (d < bd) {
        bd = d;
        best = g;
      }
    }
    s.w[best] += 1.0;
    ss[best] += (v - centers[best]) * (v - centers[best]);
  }
  const double n = static_cast<double>(z.size());
  for (int g = 0; g < G; ++g) {
    if (s.w[g] > 1.0) s.sd[g] = std::max(std::sqrt(ss[g] / s.w[g]), fallback_sd * 0.1);
    s.w[g] = std::max(s.w[g] / n, 1e-3);
  }
  const double wsum = std::accumulate(s.w.begin(), s.w.end(), 0.0);
  for (double& w : s.w) w /= wsum;
  return s;
}

// Runs EM from one start; returns nullopt when a component collapses.
std::optional<EmFit> em_from_start(std::span<const double> z, EmStart start,
                                   const EmOptions& opts, double sd_floor,
                                   std::vector<std::vector<double>>& resp,
                                   std::vector<double>& mx, std::vector<double>& total) {
  const std::size_t n = z.size();
  const int G = static_cast<int>(start.w.size());
  std::vector<MixComp> comps(G);
  double ll_old = -std::numeric_limits<double>::infinity();
  double ll = ll_old;
  for (int it = 0; it < opts.max_iter; ++it) {
    for (int g = 0; g < G; ++g)
      comps[g] = {std::log(start.w[g]), start.mean[g], start.sd[g]};
    mixture_estep(z, comps, resp, mx, total);
    ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) ll += mx[i] + std::log(total[i]);

    for (int g = 0; g < G; ++g) {
      double ng = 0.0, sz = 0.0;
      const double* rg = resp[g].data();
      for (std::size_t i = 0; i < n; ++i) {
        const double r = rg[i] / total[i];
        ng += r;
        sz += r * z[i];
      }
      if (ng < opts.min_effective_count) return std::nullopt;
      const double mu = sz / ng;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = z[i] - mu;
        sv += (rg[i] / total[i]) * d * d;
      }
      const double sd = std::sqrt(sv / ng);
      if (sd < sd_floor) return std::nullopt;
      start.w[g] = ng / static_cast<double>(n);
      start.mean[g] = mu;
      start.sd[g] = sd;
    }
    if (std::abs(ll - ll_old) < opts.rel_tol * (std::abs(ll) + 1.0)) break;
    ll_old = ll;
  }
  return EmFit{ll, std::move(start.w), std::move(start.mean), std::move(start.sd)};
}

TwoGroupModel model_from_fit(const EmFit& fit, double median) {
  const int G = static_cast<int>(fit.w.size());
  int null_idx = 0;
  for (int g = 1; g < G; ++g) {
    if (fit.w[g] > fit.w[null_idx] ||
        (fit.w[g] == fit.w[null_idx] &&
         std::abs(fit.mean[g] - median) < std::abs(fit.mean[null_idx] - median)))
      null_idx = g;
  }
  TwoGroupModel model;
  model.null_component = {fit.mean[null_idx], fit.sd[null_idx]};
  model.pi = std::min(std::max(1.0 - fit.w[null_idx], 0.0),
                      std::nextafter(1.0, 0.0));
  if (model.pi > 0.0) {
    for (int g = 0; g < G; ++g) {
      if (g == null_idx) continue;
      model.alternatives.push_back({fit.w[g] / model.pi, fit.mean[g], fit.sd[g]});
    }
    // renormalize against rounding
    double ws = 0.0;
    for (auto& a : model.alternatives) ws += a.weight;
    if (ws > 0.0)
      for (auto& a : model.alternatives) a.weight /= ws;
  }
  return model;
}

}  // namespace

TwoGroupModel fit_mixture_em(std::span<const double> z, const EmOptions& opts) {
  if (z.size() < 50) throw domain_error("fit_mixture_em: need at least 50 points");
  require_finite(z);
  for (int g : opts.candidates)
    if (g < 1 || g > 8) throw domain_error("fit_mixture_em: candidate size outside 1..8");

  const std::size_t n = z.size();
  std::vector<double> zs(z.begin(), z.end());
  std::sort(zs.begin(), zs.end());
  const double med = zs[n / 2];
  const double sd = sample_sd(z);
  if (!(sd > 0.0)) throw domain_error("fit_mixture_em: constant data");
  const double sd_floor = opts.sd_floor_frac * sd;
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;

  std::vector<std::vector<double>> resp;
  std::vector<double> mx, total;

  double best_bic = -std::numeric_limits<double>::infinity();
  std::optional<EmFit> best_fit;

  for (int round = 0; round < 6; ++round) {
    for (int G : opts.candidates) {
      if (G == 1) {
        EmFit fit;
        fit.w = {1.0};
        fit.mean = {mean};
        fit.sd = {sd};
        fit.loglik = 0.0;
        for (double v : z) fit.loglik += num::norm_logpdf(v, mean, sd);
        const double bic = 2.0 * fit.loglik - 2.0 * std::log(static_cast<double>(n));
        if (bic > best_bic) {
          best_bic = bic;
          best_fit = fit;
        }
        continue;
      }
      std::vector<EmStart> starts;
      // quantile-split k-means
      std::vector<double> qc(G);
      for (int g = 0; g < G; ++g)
        qc[g] = zs[static_cast<std::size_t>((g + 0.5) * n / G)];
      starts.push_back(moments_from_centers(z, kmeans_1d(z, qc), sd));
      // center + tails: one dominant component at the median, wider shells
      {
        EmStart ct;
        ct.w.assign(G, 0.1 / (G - 1));
        ct.w[0] = 0.9;
        ct.mean.assign(G, med);
        ct.sd.resize(G);
        for (int g = 0; g < G; ++g) ct.sd[g] = sd * 0.9 * std::pow(1.7, g);
        starts.push_back(std::move(ct));
      }
      // tail clusters: a small component seeded on each extreme flank,
      // the bulk split by quantiles across the rest (no k-means here,
      // which would dissolve the seed)
      for (const bool low : {true, false}) {
        const std::size_t k_tail = std::max<std::size_t>(10, n / 500);
        EmStart ts;
        ts.w.assign(G, 0.0);
        ts.mean.assign(G, 0.0);
        ts.sd.assign(G, sd);
        double tmean = 0.0;
        for (std::size_t i = 0; i < k_tail; ++i)
          tmean += low ? zs[i] : zs[n - 1 - i];
        tmean /= static_cast<double>(k_tail);
        double tsd = 0.0;
        for (std::size_t i = 0; i < k_tail; ++i) {
          const double v = (low ? zs[i] : zs[n - 1 - i]) - tmean;
          tsd += v * v;
        }
        ts.mean[G - 1] = tmean;
        ts.sd[G - 1] = std::max(std::sqrt(tsd / k_tail), sd_floor * 2.0);
        ts.w[G - 1] = static_cast<double>(k_tail) / n;
        for (int g = 0; g < G - 1; ++g) {
          ts.mean[g] = zs[static_cast<std::size_t>((g + 0.5) * n / (G - 1))];
          ts.sd[g] = sd;
          ts.w[g] = (1.0 - ts.w[G - 1]) / (G - 1);
        }
        starts.push_back(std::move(ts));
      }
      // seeded random restarts: k-means from random data points
      for (int r = 0; r < opts.random_restarts; ++r) {
        Rng rng(child_seed(opts.seed, (static_cast<std::uint64_t>(round) << 16) +
                                          (static_cast<std::uint64_t>(G) << 8) + r));
        std::vector<double> c(G);
        for (int g = 0; g < G; ++g) c[g] = z[rng.below(n)];
        starts.push_back(moments_from_centers(z, kmeans_1d(z, std::move(c)), sd));
      }

      std::optional<EmFit> bestG;
      for (auto& s : starts) {
        auto fit = em_from_start(z, std::move(s), opts, sd_floor, resp, mx, total);
        if (fit && (!bestG || fit->loglik > bestG->loglik)) bestG = std::move(fit);
      }
      if (!bestG) continue;  // every start collapsed for this G
      const double bic = 2.0 * bestG->loglik -
                         (3.0 * G - 1.0) * std::log(static_cast<double>(n));
      if (bic > best_bic) {
        best_bic = bic;
        best_fit = std::move(bestG);
      }
    }
    if (best_fit) break;  // rounds only re-draw restarts after total collapse
  }
  if (!best_fit) throw estimation_error("fit_mixture_em: EM degenerate on every start");
  auto model = model_from_fit(*best_fit, med);
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Empirical null
// ---------------------------------------------------------------------------
namespace {

// Compact Nelder-Mead for the 2-parameter truncated-normal likelihood.
template <typename F>
std::pair<double, double> nelder_mead_2d(F f, double x0, double y0, double step_x,
                                         double step_y, int iters = 300) {
  struct P {
    double x, y, v;
  };
  std::array<P, 3> s{{{x0, y0, f(x0, y0)},
                      {x0 + step_x, y0, f(x0 + step_x, y0)},
                      {x0, y0 + step_y, f(x0, y0 + step_y)}}};
  auto by_v = [](const P& a, const P& b) { return a.v < b.v; };
  for (int it = 0; it < iters; ++it) {
    std::sort(s.begin(), s.end(), by_v);
    if (std::abs(s[2].v - s[0].v) < 1e-12 * (std::abs(s[0].v) + 1.0)) break;
    const double cx = 0.5 * (s[0].x + s[1].x);
    const double cy = 0.5 * (s[0].y + s[1].y);
    P refl{cx + (cx - s[2].x), cy + (cy - s[2].y), 0.0};
    refl.v = f(refl.x, refl.y);
    if (refl.v < s[0].v) {
      P exp_{cx + 2.0 * (cx - s[2].x), cy + 2.0 * (cy - s[2].y), 0.0};
      exp_.v = f(exp_.x, exp_.y);
      s[2] = exp_.v < refl.v ? exp_ : refl;
    } else if (refl.v < s[1].v) {
      s[2] = refl;
    } else {
      P contr{cx + 0.5 * (s[2].x - cx), cy + 0.5 * (s[2].y - cy), 0.0};
      contr.v = f(contr.x, contr.y);
      if (contr.v < s[2].v) {
        s[2] = contr;
      } else {
        for (int i = 1; i < 3; ++i) {
          s[i].x = s[0].x + 0.5 * (s[i].x - s[0].x);
          s[i].y = s[0].y + 0.5 * (s[i].y - s[0].y);
          s[i].v = f(s[i].x, s[i].y);
        }
      }
    }
  }
  std::sort(s.begin(), s.end(), by_v);
  return {s[0].x, s[0].y};
}

}  // namespace

double silverman_bandwidth(std::span<const double> z) {
  if (z.size() < 2) throw domain_error("bandwidth needs at least 2 points");
  std::vector<double> zs(z.begin(), z.end());
  std::sort(zs.begin(), zs.end());
  const double sd = sample_sd(z);
  const double iqr = zs[static_cast<std::size_t>(0.75 * (zs.size() - 1))] -
                     zs[static_cast<std::size_t>(0.25 * (zs.size() - 1))];
  double scale = std::min(sd, iqr / 1.34);
  if (scale <= 0.0) scale = std::max(sd, 1e-12);
  return 0.9 * scale * std::pow(static_cast<double>(z.size()), -0.2);
}

namespace {

struct BinnedKde {
  double lo = 0.0;
  double dx = 1.0;
  std::vector<double> dens;

  double at(double x) const {
    const double pos = (x - lo) / dx;
    if (pos <= 0.0) return dens.front();
    if (pos >= static_cast<double>(dens.size() - 1)) return dens.back();
    const auto b = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(b);
    return dens[b] * (1.0 - frac) + dens[b + 1] * frac;
  }
};

BinnedKde binned_kde(std::span<const double> z, double h) {
  const auto [mn_it, mx_it] = std::minmax_element(z.begin(), z.end());
  constexpr std::size_t B = 2048;
  BinnedKde out;
  out.lo = *mn_it - 5.0 * h;
  const double hi = *mx_it + 5.0 * h;
  out.dx = (hi - out.lo) / (B - 1);

  std::vector<double> counts(B, 0.0);
  for (double v : z) {
    const double pos = (v - out.lo) / out.dx;
    const auto b = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(b);
    counts[b] += 1.0 - frac;
    if (b + 1 < B) counts[b + 1] += frac;
  }
  const auto W = static_cast<std::int64_t>(std::ceil(5.0 * h / out.dx));
  std::vector<double> kernel(W + 1);
  for (std::int64_t j = 0; j <= W; ++j)
    kernel[j] = num::norm_pdf(static_cast<double>(j) * out.dx / h) / h;
  out.dens.assign(B, 0.0);
  const double inv_m = 1.0 / static_cast<double>(z.size());
  for (std::size_t b = 0; b < B; ++b) {
    if (counts[b] == 0.0) continue;
    const double c = counts[b] * inv_m;
    const std::int64_t jlo = -std::min<std::int64_t>(W, static_cast<std::int64_t>(b));
    const std::int64_t jhi = std::min<std::int64_t>(W, static_cast<std::int64_t>(B - 1 - b));
    for (std::int64_t j = jlo; j <= jhi; ++j)
      out.dens[b + j] += c * kernel[std::abs(j)];
  }
  return out;
}

// Mode from an oversmoothed grid KDE with parabolic peak refinement;
// much steadier than an argmax over sample points.
double kde_mode(std::span<const double> z) {
  const double h = 1.5 * silverman_bandwidth(z);
  const auto kde = binned_kde(z, h);
  std::size_t best = 0;
  for (std::size_t b = 1; b < kde.dens.size(); ++b)
    if (kde.dens[b] > kde.dens[best]) best = b;
  double mode = kde.lo + best * kde.dx;
  if (best > 0 && best + 1 < kde.dens.size()) {
    const double y0 = kde.dens[best - 1], y1 = kde.dens[best], y2 = kde.dens[best + 1];
    const double denom = y0 - 2.0 * y1 + y2;
    if (denom < 0.0) mode += 0.5 * kde.dx * (y0 - y2) / denom;
  }
  return mode;
}

}  // namespace

std::vector<double> kde_density_at_points(std::span<const double> z, double bandwidth) {
  require_finite(z);
  if (z.empty()) return {};
  const double h = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(z);
  const auto kde = binned_kde(z, h);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = kde.at(z[i]);
  return out;
}

EmpiricalNull fit_empirical_null(std::span<const double> z, double central_fraction,
                                 NullFitMethod method) {
  if (z.size() < 200) throw domain_error("fit_empirical_null: need at least 200 points");
  if (!(central_fraction > 0.2 && central_fraction <= 0.9))
    throw domain_error("fit_empirical_null: central_fraction outside (0.2, 0.9]");
  require_finite(z);

  const std::size_t m = z.size();
  std::vector<double> zs(z.begin(), z.end());
  std::sort(zs.begin(), zs.end());

  const double mode = kde_mode(z);
  // central window around the mode's empirical-CDF position
  const double q_mode =
      static_cast<double>(std::upper_bound(zs.begin(), zs.end(), mode) - zs.begin()) / m;
  double q_lo = q_mode - 0.5 * central_fraction;
  double q_hi = q_mode + 0.5 * central_fraction;
  if (q_lo < 0.005) {
    q_hi += 0.005 - q_lo;
    q_lo = 0.005;
  }
  if (q_hi > 0.995) {
    q_lo -= q_hi - 0.995;
    q_hi = 0.995;
  }
  const double a = zs[static_cast<std::size_t>(q_lo * (m - 1))];
  const double b = zs[static_cast<std::size_t>(q_hi * (m - 1))];

  std::vector<double> win;
  win.reserve(m);
  for (double v : z)
    if (v >= a && v <= b) win.push_back(v);
  if (win.size() < 100)
    throw estimation_error("fit_empirical_null: fewer than 100 points in central window");

  double delta0, sigma0;
  if (method == NullFitMethod::mle) {
    // truncated-normal MLE on the window
    double wm = std::accumulate(win.begin(), win.end(), 0.0) / win.size();
    double wsd = sample_sd(win);
    const auto negll = [&](double d, double logs) {
      const double s = std::exp(logs);
      double ll = 0.0;
      for (double v : win) ll += num::norm_logpdf(v, d, s);
      const double pa = num::norm_cdf((a - d) / s);
      const double pb = num::norm_cdf((b - d) / s);
      const double pw = std::max(pb - pa, 1e-300);
      return -(ll - static_cast<double>(win.size()) * std::log(pw));
    };
    auto [d_opt, logs_opt] =
        nelder_mead_2d(negll, wm, std::log(wsd * 1.3), 0.1 * wsd, 0.2);
    delta0 = d_opt;
    sigma0 = std::exp(logs_opt);
  } else {
    // central matching: quadratic fit to log KDE on window grid points
    constexpr int kGrid = 64;
    std::vector<double> gx(kGrid), gy(kGrid);
    std::vector<double> zgrid(kGrid);
    for (int i = 0; i < kGrid; ++i)
      zgrid[i] = a + (b - a) * (i + 0.5) / kGrid;
    // exact KDE at the few grid points
    const double h = silverman_bandwidth(z);
    std::vector<double> dgrid(kGrid, 0.0);
    for (int i = 0; i < kGrid; ++i) {
      double acc = 0.0;
      for (double v : z) {
        const double u = (zgrid[i] - v) / h;
        if (std::abs(u) < 6.0) acc += std::exp(-0.5 * u * u);
      }
      dgrid[i] = acc / (z.size() * h * 2.5066282746310005024);
    }
    for (int i = 0; i < kGrid; ++i) {
      gx[i] = zgrid[i];
      gy[i] = std::log(std::max(dgrid[i], 1e-300));
    }
    // least squares for y = b0 + b1 x + b2 x^2
    double s0 = kGrid, s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
    for (int i = 0; i < kGrid; ++i) {
      const double x = gx[i], x2 = x * x;
      s1 += x;
      s2 += x2;
      s3 += x2 * x;
      s4 += x2 * x2;
      t0 += gy[i];
      t1 += gy[i] * x;
      t2 += gy[i] * x2;
    }
    // solve 3x3 normal equations (Cramer)
    const double det = s0 * (s2 * s4 - s3 * s3) - s1 * (s1 * s4 - s3 * s2) +
                       s2 * (s1 * s3 - s2 * s2);
    if (std::abs(det) < 1e-30)
      throw estimation_error("fit_empirical_null: singular central-matching fit");
    const double b0 = (t0 * (s2 * s4 - s3 * s3) - s1 * (t1 * s4 - s3 * t2) +
                       s2 * (t1 * s3 - s2 * t2)) /
                      det;
    const double b1 = (s0 * (t1 * s4 - t2 * s3) - t0 * (s1 * s4 - s3 * s2) +
                       s2 * (s1 * t2 - t1 * s2)) /
                      det;
    const double b2 = (s0 * (s2 * t2 - s3 * t1) - s1 * (s1 * t2 - t1 * s2) +
                       t0 * (s1 * s3 - s2 * s2)) /
                      det;
    if (!(b2 < 0.0))
      throw estimation_error("fit_empirical_null: central matching found no peak");
    sigma0 = std::sqrt(-0.5 / b2);
    delta0 = b1 * sigma0 * sigma0;
    const double logpi0 = b0 + 0.5 * delta0 * delta0 / (sigma0 * sigma0) +
                          std::log(sigma0 * 2.5066282746310005024);
    EmpiricalNull out{delta0, sigma0, std::min(std::exp(logpi0), 1.0)};
    if (!(out.sigma0 > 0.0)) throw estimation_error("fit_empirical_null: bad sigma0");
    return out;
  }

  const double pa = num::norm_cdf((a - delta0) / sigma0);
  const double pb = num::norm_cdf((b - delta0) / sigma0);
  const double pw = std::max(pb - pa, 1e-12);
  const double pi0 =
      std::min(1.0, (static_cast<double>(win.size()) / m) / pw);
  if (!(sigma0 > 0.0) || !std::isfinite(delta0))
    throw estimation_error("fit_empirical_null: fit did not converge");
  return EmpiricalNull{delta0, sigma0, pi0};
}

LfdrEstimate lfdr_empirical(std::span<const double> z, const EmpiricalNull& null,
                            DensityMethod method, std::uint64_t seed) {
  if (!(null.sigma0 > 0.0)) throw domain_error("lfdr_empirical: sigma0 <= 0");
  if (!(null.pi0 > 0.0 && null.pi0 <= 1.0))
    throw domain_error("lfdr_empirical: pi0 outside (0,1]");
  require_finite(z);

  std::vector<double> fhat;
  if (method == DensityMethod::kernel) {
    fhat = kde_density_at_points(z);
  } else {
    EmOptions opts;
    opts.seed = seed;
    const auto model = fit_mixture_em(z, opts);
    fhat = mixture_density(z, model);
  }
  LfdrEstimate est;
  std::vector<double> values(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double num_i = null.pi0 * num::norm_pdf(z[i], null.delta0, null.sigma0);
    if (fhat[i] <= 0.0) {
      values[i] = 1.0;
      est.zero_density.push_back(static_cast<std::uint32_t>(i));
    } else {
      values[i] = std::min(1.0, std::max(0.0, num_i / fhat[i]));
    }
  }
  est.lfdr = make_lfdr_vector(std::move(values));
  return est;
}

}  // namespace fdx::twogroup
