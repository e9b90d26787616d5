#include "fdx/sim.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "fdx/posterior.hpp"
#include "fdx/special.hpp"

namespace fdx::sim {

std::size_t SimulatedDataset::non_null_count() const {
  return static_cast<std::size_t>(
      std::count(theta.begin(), theta.end(), std::uint8_t{1}));
}

SimulatedDataset gen_iid(std::size_t m, double pi, double mu, std::uint64_t seed) {
  if (m < 1) throw domain_error("gen_iid: m must be >= 1");
  if (!(pi >= 0.0 && pi <= 1.0)) throw domain_error("gen_iid: pi outside [0,1]");
  SimulatedDataset d;
  d.scenario = Scenario::iid;
  d.seed = seed;
  d.z.resize(m);
  d.theta.resize(m);
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const bool t = rng.bernoulli(pi);
    d.theta[i] = t;
    d.z[i] = rng.normal() + (t ? mu : 0.0);
  }
  return d;
}

SimulatedDataset gen_equicorr(std::size_t m, double pi, double mu, double rho,
                              std::uint64_t seed) {
  if (m < 1) throw domain_error("gen_equicorr: m must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw domain_error("gen_equicorr: rho outside [0,1)");
  SimulatedDataset d;
  d.scenario = Scenario::equicorr;
  d.seed = seed;
  d.z.resize(m);
  d.theta.resize(m);
  Rng rng(seed);
  const double w = rng.normal();
  const double sr = std::sqrt(rho);
  const double sc = std::sqrt(1.0 - rho);
  for (std::size_t i = 0; i < m; ++i) {
    const bool t = rng.bernoulli(pi);
    d.theta[i] = t;
    d.z[i] = (t ? mu : 0.0) + sr * w + sc * rng.normal();
  }
  return d;
}

SimulatedDataset gen_hierarchical(std::size_t m, std::uint64_t seed) {
  if (m < 1) throw domain_error("gen_hierarchical: m must be >= 1");
  SimulatedDataset d;
  d.scenario = Scenario::hierarchical;
  d.seed = seed;
  d.z.resize(m);
  d.theta.resize(m);
  Rng rng(seed);
  const double mu0 = rng.uniform(-0.1, 0.1);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = rng.uniform();
    if (u < 0.05) {
      d.theta[i] = 1;
      d.z[i] = rng.normal() + 0.25;
    } else if (u < 0.10) {
      d.theta[i] = 1;
      d.z[i] = rng.normal() - 0.25;
    } else {
      d.theta[i] = 0;
      d.z[i] = rng.normal() + mu0;
    }
  }
  return d;
}

TrialMetrics compute_metrics(std::span<const std::uint32_t> rejected,
                             std::span<const std::uint8_t> theta, double gamma) {
  TrialMetrics t;
  t.rejections = rejected.size();
  std::size_t falses = 0;
  for (auto i : rejected) {
    if (i >= theta.size()) throw domain_error("compute_metrics: index out of range");
    if (theta[i] == 0)
      ++falses;
    else
      ++t.tp;
  }
  const auto denom = std::max<std::size_t>(t.rejections, 1);
  t.fdp = static_cast<double>(falses) / static_cast<double>(denom);
  t.exceeded = num::count_exceeds(static_cast<std::int64_t>(falses), gamma,
                                  static_cast<std::int64_t>(denom));
  return t;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------
namespace {

struct TrialStats {
  const twogroup::LfdrVector* lfdr(Stat s) const {
    switch (s) {
      case Stat::oracle_lfdr: return &oracle;
      case Stat::em_lfdr: return &em;
      case Stat::empirical_kernel_lfdr: return &emp_kernel;
      case Stat::empirical_mixture_lfdr: return &emp_mixture;
      default: return nullptr;
    }
  }
  const std::vector<double>* pvalues(Stat s) const {
    switch (s) {
      case Stat::theoretical_pvalue: return &p_theoretical;
      case Stat::empirical_pvalue: return &p_empirical;
      default: return nullptr;
    }
  }
  twogroup::LfdrVector oracle, em, emp_kernel, emp_mixture;
  std::vector<double> p_theoretical, p_empirical;
};

twogroup::TwoGroupModel iid_model(const ScenarioConfig& sc) {
  twogroup::TwoGroupModel model;
  model.pi = sc.pi;
  model.null_component = {0.0, 1.0};
  if (sc.pi > 0.0) model.alternatives = {{1.0, sc.mu, 1.0}};
  return model;
}

SimulatedDataset generate(const ScenarioConfig& sc, std::uint64_t seed) {
  switch (sc.kind) {
    case Scenario::iid: return gen_iid(sc.m, sc.pi, sc.mu, seed);
    case Scenario::equicorr: return gen_equicorr(sc.m, sc.pi, sc.mu, sc.rho, seed);
    case Scenario::hierarchical: return gen_hierarchical(sc.m, seed);
  }
  throw domain_error("unknown scenario");
}

TrialStats compute_stats(const ScenarioConfig& sc, const SimulatedDataset& data,
                         std::uint64_t trial_seed, bool need_oracle, bool need_em,
                         bool need_emp_kernel, bool need_emp_mixture,
                         bool need_p_theo, bool need_p_emp) {
  TrialStats st;
  if (need_oracle) {
    if (sc.kind == Scenario::iid) {
      st.oracle = twogroup::lfdr_oracle(data.z, iid_model(sc));
    } else if (sc.kind == Scenario::equicorr) {
      posterior::DependenceModel dm;
      dm.mu = sc.mu;
      dm.rho = sc.rho;
      dm.pi = sc.pi;
      st.oracle = posterior::exchangeable_lfdr(data.z, dm);
    } else {
      throw domain_error("oracle lfdr is not defined for the hierarchical scenario");
    }
  }
  if (need_em) {
    twogroup::EmOptions opts;
    opts.seed = child_seed(trial_seed, 101);
    const auto fitted = twogroup::fit_mixture_em(data.z, opts);
    st.em = twogroup::lfdr_oracle(data.z, fitted);
  }
  if (need_emp_kernel || need_emp_mixture || need_p_emp) {
    const auto null = twogroup::fit_empirical_null(data.z);
    if (need_emp_kernel)
      st.emp_kernel =
          twogroup::lfdr_empirical(data.z, null, twogroup::DensityMethod::kernel)
              .lfdr;
    if (need_emp_mixture)
      st.emp_mixture = twogroup::lfdr_empirical(data.z, null,
                                                twogroup::DensityMethod::mixture,
                                                child_seed(trial_seed, 103))
                           .lfdr;
    if (need_p_emp)
      st.p_empirical =
          twogroup::pvalue_from_z(data.z, {null.delta0, null.sigma0});
  }
  if (need_p_theo) st.p_theoretical = twogroup::pvalue_from_z(data.z, {0.0, 1.0});
  return st;
}

std::vector<std::uint32_t> run_procedure(const ProcedureConfig& pc,
                                         const TrialStats& st) {
  const FdxLevel level{pc.gamma, pc.alpha};
  switch (pc.method) {
    case Method::proc1:
      return procedures::procedure1(*st.lfdr(pc.stat), level).rejected;
    case Method::proc2:
      return procedures::procedure2(*st.lfdr(pc.stat), level).rejected;
    case Method::sc:
      return procedures::sc_adaptive(*st.lfdr(pc.stat), pc.alpha);
    case Method::bh:
      return procedures::bh(*st.pvalues(pc.stat), pc.alpha);
    case Method::lr:
      return procedures::lehmann_romano(*st.pvalues(pc.stat), level);
    case Method::gr:
      return procedures::guo_romano(*st.pvalues(pc.stat), level);
  }
  throw domain_error("unknown method");
}

double sd_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / (static_cast<double>(v.size()) - 1.0));
}

}  // namespace

ExperimentReport run_experiment(const ScenarioConfig& scenario,
                                const std::vector<ProcedureConfig>& procedures_list,
                                const RunOptions& options) {
  if (options.reps < 1) throw domain_error("run_experiment: reps must be >= 1");
  for (const auto& pc : procedures_list) {
    const bool is_p =
        pc.stat == Stat::theoretical_pvalue || pc.stat == Stat::empirical_pvalue;
    const bool wants_p = pc.method == Method::bh || pc.method == Method::lr ||
                         pc.method == Method::gr;
    if (is_p != wants_p)
      throw domain_error("run_experiment: statistic does not match method for " +
                         pc.name);
  }

  bool need_oracle = false, need_em = false, need_ek = false, need_em2 = false,
       need_pt = false, need_pe = false;
  for (const auto& pc : procedures_list) {
    need_oracle |= pc.stat == Stat::oracle_lfdr;
    need_em |= pc.stat == Stat::em_lfdr;
    need_ek |= pc.stat == Stat::empirical_kernel_lfdr;
    need_em2 |= pc.stat == Stat::empirical_mixture_lfdr;
    need_pt |= pc.stat == Stat::theoretical_pvalue;
    need_pe |= pc.stat == Stat::empirical_pvalue;
  }

  const std::size_t R = options.reps;
  const std::size_t P = procedures_list.size();
  std::vector<std::vector<TrialMetrics>> trials(P, std::vector<TrialMetrics>(R));
  std::vector<std::uint8_t> kept(R, 0);
  std::vector<std::size_t> non_null(R, 0);
  std::vector<std::string> notes(R);

  int threads = options.threads > 0
                    ? options.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(R)));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= R) return;
      const std::uint64_t seed_r = child_seed(options.master_seed, r);
      try {
        const auto data = generate(scenario, seed_r);
        const auto st = compute_stats(scenario, data, seed_r, need_oracle, need_em,
                                      need_ek, need_em2, need_pt, need_pe);
        non_null[r] = data.non_null_count();
        for (std::size_t p = 0; p < P; ++p) {
          const auto rejected = run_procedure(procedures_list[p], st);
          trials[p][r] =
              compute_metrics(rejected, data.theta, procedures_list[p].gamma);
        }
        kept[r] = 1;
      } catch (const estimation_error& e) {
        notes[r] = e.what();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentReport rep;
  rep.reps = R;
  for (std::size_t r = 0; r < R; ++r) {
    if (!kept[r]) {
      ++rep.exclusions;
      if (rep.exclusion_notes.size() < 20)
        rep.exclusion_notes.push_back("rep " + std::to_string(r) + ": " + notes[r]);
    }
  }
  rep.invalid = rep.exclusions * 100 > R;

  const auto n_inc = static_cast<double>(R - rep.exclusions);
  double mean_nn = 0.0;
  for (std::size_t r = 0; r < R; ++r)
    if (kept[r]) mean_nn += static_cast<double>(non_null[r]);
  mean_nn = n_inc > 0 ? mean_nn / n_inc : 0.0;

  for (std::size_t p = 0; p < P; ++p) {
    ProcedureAggregate agg;
    agg.name = procedures_list[p].name;
    std::vector<double> fdps, tps;
    fdps.reserve(R);
    tps.reserve(R);
    double exc = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      if (!kept[r]) continue;
      fdps.push_back(trials[p][r].fdp);
      tps.push_back(static_cast<double>(trials[p][r].tp));
      exc += trials[p][r].exceeded ? 1.0 : 0.0;
    }
    if (!fdps.empty()) {
      agg.fdx = exc / n_inc;
      agg.fdx_se = std::sqrt(std::max(agg.fdx * (1.0 - agg.fdx), 0.0) / n_inc);
      const double mean_fdp = std::accumulate(fdps.begin(), fdps.end(), 0.0) / n_inc;
      agg.fdr = mean_fdp;
      agg.fdr_se = sd_of(fdps, mean_fdp) / std::sqrt(n_inc);
      const double mean_tp = std::accumulate(tps.begin(), tps.end(), 0.0) / n_inc;
      if (mean_nn > 0.0) {
        agg.power = mean_tp / mean_nn;
        agg.power_se = sd_of(tps, mean_tp) / std::sqrt(n_inc) / mean_nn;
      }
    }
    rep.procedures.push_back(agg);
  }
  if (options.keep_trials) {
    rep.trials = std::move(trials);
    rep.kept = std::move(kept);
    rep.non_null = std::move(non_null);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Ranking counterexample
// ---------------------------------------------------------------------------
std::vector<ContradictionRate> counterexample_experiment(
    std::span<const double> rhos, std::size_t runs_per_rho, std::uint64_t master_seed,
    int threads) {
  constexpr std::size_t kM = 10;
  constexpr double kPi = 0.3;
  constexpr double kMu = -1.5;
  constexpr double kGamma = 0.5;
  constexpr double kInflation = 0.01;

  std::vector<ContradictionRate> out;
  for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
    const double rho = rhos[ri];
    posterior::DependenceModel model;
    model.mu = kMu;
    model.rho = rho;
    model.pi = kPi;
    model.alt_var_inflation = kInflation;
    model.blocks = std::vector<int>(kM);
    for (std::size_t i = 0; i < kM; ++i) (*model.blocks)[i] = i < kM / 2 ? 0 : 1;

    std::vector<std::uint8_t> contradiction(runs_per_rho, 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t run = next.fetch_add(1);
        if (run >= runs_per_rho) return;
        Rng rng(child_seed(child_seed(master_seed, ri), run));
        std::array<double, 2> w{rng.normal(), rng.normal()};
        std::array<double, kM> z;
        const double sr = std::sqrt(rho);
        const double sc = std::sqrt(1.0 - rho);
        const double si = std::sqrt(kInflation);
        for (std::size_t i = 0; i < kM; ++i) {
          const bool t = rng.bernoulli(kPi);
          z[i] = (t ? kMu : 0.0) + sr * w[i < kM / 2 ? 0 : 1] + sc * rng.normal() +
                 (t ? si * rng.normal() : 0.0);
        }
        const auto post = posterior::enumerate_posterior(z, model);

        // top-2 by marginal lfdr (stable)
        std::array<std::uint32_t, kM> idx;
        std::iota(idx.begin(), idx.end(), 0u);
        std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
          return post.marginal_lfdr[a] < post.marginal_lfdr[b];
        });
        const std::array<std::uint32_t, 2> marginal_sel{idx[0], idx[1]};
        // best per block
        std::array<std::uint32_t, 2> block_sel{0u, static_cast<std::uint32_t>(kM / 2)};
        for (std::uint32_t i = 1; i < kM / 2; ++i)
          if (post.marginal_lfdr[i] < post.marginal_lfdr[block_sel[0]]) block_sel[0] = i;
        for (std::uint32_t i = kM / 2 + 1; i < kM; ++i)
          if (post.marginal_lfdr[i] < post.marginal_lfdr[block_sel[1]]) block_sel[1] = i;

        const bool same = (marginal_sel[0] == block_sel[0] && marginal_sel[1] == block_sel[1]) ||
                          (marginal_sel[0] == block_sel[1] && marginal_sel[1] == block_sel[0]);
        if (!same) {
          const double t_marginal = post.exact_tail(marginal_sel, kGamma);
          const double t_block = post.exact_tail(block_sel, kGamma);
          if (t_block < t_marginal) contradiction[run] = 1;
        }
      }
    };
    int T = threads > 0 ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    T = std::max(1, std::min<int>(T, static_cast<int>(runs_per_rho)));
    if (T == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < T; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    const auto hits = static_cast<double>(
        std::count(contradiction.begin(), contradiction.end(), std::uint8_t{1}));
    out.push_back({rho, 100.0 * hits / static_cast<double>(runs_per_rho), runs_per_rho});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV renderings
// ---------------------------------------------------------------------------
std::string report_csv(const ExperimentReport& report) {
  std::string out =
      "procedure,fdx,fdx_se,fdr,fdr_se,power,power_se,reps,exclusions\n";
  char buf[256];
  for (const auto& p : report.procedures) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%zu,%zu\n",
                  p.name.c_str(), p.fdx, p.fdx_se, p.fdr, p.fdr_se, p.power,
                  p.power_se, report.reps, report.exclusions);
    out += buf;
  }
  return out;
}

std::string contradiction_csv(std::span<const ContradictionRate> rows) {
  std::string out = "rho,contradiction_pct,runs\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%zu\n", r.rho, r.percent, r.runs);
    out += buf;
  }
  return out;
}

}  // namespace fdx::sim
