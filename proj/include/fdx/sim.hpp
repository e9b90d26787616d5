#pragma once
// Simulation designs, per-trial metrics, and the seeded experiment
// runner with deterministic parallel replication.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdx/common.hpp"
#include "fdx/procedures.hpp"
#include "fdx/twogroup.hpp"

namespace fdx::sim {

enum class Scenario { iid, equicorr, hierarchical };

struct SimulatedDataset {
  std::vector<double> z;
  std::vector<std::uint8_t> theta;
  Scenario scenario = Scenario::iid;
  std::uint64_t seed = 0;

  std::size_t non_null_count() const;
};

// theta_i ~ Bernoulli(pi) iid, z_i | theta_i ~ N(mu*theta_i, 1).
SimulatedDataset gen_iid(std::size_t m, double pi, double mu, std::uint64_t seed);

// One shared factor W per dataset: z_i = mu*theta_i + sqrt(rho) W
// + sqrt(1-rho) noise_i.
SimulatedDataset gen_equicorr(std::size_t m, double pi, double mu, double rho,
                              std::uint64_t seed);

// Hierarchical nulls: mu0 ~ U[-0.1, 0.1] per dataset, nulls ~ N(mu0, 1),
// non-nulls (10%) split evenly between marginal means +0.25 and -0.25.
SimulatedDataset gen_hierarchical(std::size_t m, std::uint64_t seed);

struct TrialMetrics {
  double fdp = 0.0;
  bool exceeded = false;
  std::size_t tp = 0;
  std::size_t rejections = 0;
};

// FDP with the max(R,1) denominator; the exceedance comparison fdp > gamma
// is carried out on exact counts.
TrialMetrics compute_metrics(std::span<const std::uint32_t> rejected,
                             std::span<const std::uint8_t> theta, double gamma);

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------
struct ScenarioConfig {
  Scenario kind = Scenario::iid;
  std::size_t m = 5000;
  double pi = 0.2;
  double mu = -2.0;
  double rho = 0.0;  // equicorr only
};

enum class Method { proc1, proc2, bh, sc, lr, gr };

// Which statistic feeds the procedure.
enum class Stat {
  oracle_lfdr,
  em_lfdr,                // mixture EM fit, lfdr from the fitted model
  empirical_kernel_lfdr,  // empirical null + kernel density
  empirical_mixture_lfdr, // empirical null + EM mixture density
  theoretical_pvalue,
  empirical_pvalue,
};

struct ProcedureConfig {
  std::string name;
  Method method = Method::proc2;
  Stat stat = Stat::oracle_lfdr;
  double gamma = 0.05;  // unused by bh/sc
  double alpha = 0.05;  // alpha_fdr for bh/sc
};

struct ProcedureAggregate {
  std::string name;
  double fdx = 0.0, fdx_se = 0.0;
  double fdr = 0.0, fdr_se = 0.0;
  double power = 0.0, power_se = 0.0;
};

struct ExperimentReport {
  std::vector<ProcedureAggregate> procedures;
  std::size_t reps = 0;
  std::size_t exclusions = 0;
  bool invalid = false;  // exclusions exceeded 1% of reps
  std::vector<std::string> exclusion_notes;
  // retained per-trial metrics (procedures x reps, included trials only
  // marked by kept[r]) when RunOptions::keep_trials is set
  std::vector<std::vector<TrialMetrics>> trials;
  std::vector<std::uint8_t> kept;
  std::vector<std::size_t> non_null;
};

struct RunOptions {
  std::size_t reps = 2000;
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0: hardware concurrency
  bool keep_trials = false;
};

// Runs every procedure on the same dataset per replication; child seeds
// derive from (master_seed, replication); the report is bit-identical
// for any thread count. Trials whose estimation step fails are excluded
// and counted; more than 1% exclusions marks the run invalid.
ExperimentReport run_experiment(const ScenarioConfig& scenario,
                                const std::vector<ProcedureConfig>& procedures,
                                const RunOptions& options);

// Appendix-style ranking counterexample on two equicorrelated blocks.
struct ContradictionRate {
  double rho = 0.0;
  double percent = 0.0;
  std::size_t runs = 0;
};
std::vector<ContradictionRate> counterexample_experiment(
    std::span<const double> rhos, std::size_t runs_per_rho, std::uint64_t master_seed,
    int threads = 0);

// CSV renderings of the report schemas.
std::string report_csv(const ExperimentReport& report);
std::string contradiction_csv(std::span<const ContradictionRate> rows);

}  // namespace fdx::sim
