// fdx command-line front end: test z-value files, run simulation
// presets, and benchmark the full-scan rule against the shortcut rule.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fdx/kernels.hpp"
#include "fdx/pbd.hpp"
#include "fdx/posterior.hpp"
#include "fdx/procedures.hpp"
#include "fdx/sim.hpp"
#include "fdx/twogroup.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitEquivalence = 4;

struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One z-value per line; an optional non-numeric first line is treated as
// a header; blank lines are ignored; LF or CRLF.
std::vector<double> read_z_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open input file: " + path);
  std::vector<double> z;
  std::string line;
  std::size_t lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    std::size_t b = line.find_last_not_of(" \t");
    const std::string tok = line.substr(a, b - a + 1);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
      if (first_content) {  // header line
        first_content = false;
        continue;
      }
      throw input_error("line " + std::to_string(lineno) +
                        ": cannot parse z-value '" + tok + "'");
    }
    first_content = false;
    z.push_back(v);
  }
  if (z.empty()) throw input_error("input file contains no z-values");
  return z;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot open output file: " + path);
  out << content;
}

int default_threads() {
  if (const char* env = std::getenv("FDX_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 0;  // library default: hardware concurrency
}

// ---------------------------------------------------------------------------
// fdx test
// ---------------------------------------------------------------------------
struct TestArgs {
  std::string input;
  double gamma = 0.0, alpha = 0.0;
  std::string method = "proc2";
  std::string null_mode = "theoretical";
  double pi = -1.0, mu = 0.0;
  std::string density = "kernel";
  bool randomize = false;
  std::uint64_t seed = 0;
  std::string out_csv, out_json;
};

int run_test(const TestArgs& a) {
  const auto z = read_z_file(a.input);
  const std::size_t m = z.size();
  const fdx::FdxLevel level{a.gamma, a.alpha};
  level.validate();

  fdx::twogroup::LfdrVector lfdr;
  std::vector<double> pvalues;
  json null_params;

  if (a.null_mode == "oracle") {
    if (a.pi < 0.0) throw input_error("--null oracle requires --pi and --mu");
    fdx::twogroup::TwoGroupModel model;
    model.pi = a.pi;
    model.null_component = {0.0, 1.0};
    if (a.pi > 0.0) model.alternatives = {{1.0, a.mu, 1.0}};
    lfdr = fdx::twogroup::lfdr_oracle(z, model);
    pvalues = fdx::twogroup::pvalue_from_z(z, model.null_component);
    null_params = {{"mode", "oracle"}, {"pi", a.pi}, {"mu", a.mu}};
  } else {
    fdx::twogroup::EmpiricalNull null;
    if (a.null_mode == "empirical") {
      null = fdx::twogroup::fit_empirical_null(z);
    } else if (a.null_mode != "theoretical") {
      throw input_error("unknown --null mode: " + a.null_mode);
    }
    const auto method = a.density == "mixture"
                            ? fdx::twogroup::DensityMethod::mixture
                            : fdx::twogroup::DensityMethod::kernel;
    lfdr = fdx::twogroup::lfdr_empirical(z, null, method, a.seed).lfdr;
    pvalues = fdx::twogroup::pvalue_from_z(z, {null.delta0, null.sigma0});
    null_params = {{"mode", a.null_mode},
                   {"delta0", null.delta0},
                   {"sigma0", null.sigma0},
                   {"pi0", null.pi0}};
  }

  fdx::procedures::RejectionResult res;
  std::vector<std::uint32_t> rejected;
  const fdx::procedures::ProcedureOptions popts{a.randomize, a.seed};
  bool has_funnel = false;
  if (a.method == "proc2") {
    res = fdx::procedures::procedure2(lfdr, level, popts);
    rejected = res.rejected;
    has_funnel = true;
  } else if (a.method == "proc1") {
    res = fdx::procedures::procedure1(lfdr, level, popts);
    rejected = res.rejected;
    has_funnel = true;
  } else if (a.method == "bh") {
    rejected = fdx::procedures::bh(pvalues, a.alpha);
  } else if (a.method == "sc") {
    rejected = fdx::procedures::sc_adaptive(lfdr, a.alpha);
  } else if (a.method == "lr") {
    rejected = fdx::procedures::lehmann_romano(pvalues, level);
  } else if (a.method == "gr") {
    rejected = fdx::procedures::guo_romano(pvalues, level);
  } else {
    throw input_error("unknown --method: " + a.method);
  }

  // per-hypothesis CSV
  std::vector<std::uint32_t> rank_of(m);
  for (std::uint32_t j = 0; j < m; ++j) rank_of[lfdr.rank[j]] = j;
  std::vector<std::uint8_t> is_rejected(m, 0);
  for (auto i : rejected) is_rejected[i] = 1;
  std::string csv = "index,z,pvalue,lfdr,rank,rejected\n";
  {
    char buf[160];
    for (std::size_t i = 0; i < m; ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%u,%d\n", i, z[i],
                    pvalues[i], lfdr.values[i], rank_of[i],
                    static_cast<int>(is_rejected[i]));
      csv += buf;
    }
  }
  if (!a.out_csv.empty()) write_file(a.out_csv, csv);

  json summary = {
      {"m", m},
      {"K", rejected.size()},
      {"k1", has_funnel ? json(res.k1) : json()},
      {"k2", has_funnel ? json(res.k2) : json()},
      {"tail_at_k", has_funnel ? json(res.tail_at_k) : json()},
      {"null", null_params},
      {"config",
       {{"command", "test"},
        {"input", a.input},
        {"gamma", a.gamma},
        {"alpha", a.alpha},
        {"method", a.method},
        {"null_mode", a.null_mode},
        {"density", a.density},
        {"randomize", a.randomize},
        {"seed", a.seed}}},
  };
  if (has_funnel && res.randomized) {
    summary["randomized"] = {{"probability", res.randomized->probability},
                             {"extra_rejected", res.randomized->extra_rejected},
                             {"index", res.randomized->index}};
  }
  if (!a.out_json.empty()) write_file(a.out_json, summary.dump(2) + "\n");
  std::cout << "m=" << m << " K=" << rejected.size() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fdx simulate
// ---------------------------------------------------------------------------
struct SimArgs {
  std::string preset = "custom";
  std::string scenario = "iid";
  std::size_t m = 5000;
  double pi = 0.2, mu = -2.0, rho = 0.0;
  double gamma = 0.05, alpha = 0.05;
  std::size_t reps = 2000;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_csv, out_json;
};

using fdx::sim::Method;
using fdx::sim::ProcedureConfig;
using fdx::sim::Stat;

std::vector<ProcedureConfig> standard_procedures(double gamma, double alpha,
                                                 bool with_oracle, bool with_em) {
  std::vector<ProcedureConfig> procs;
  if (with_oracle)
    procs.push_back({"proc2_oracle", Method::proc2, Stat::oracle_lfdr, gamma, alpha});
  if (with_em) {
    procs.push_back({"proc2_lfdr", Method::proc2, Stat::em_lfdr, gamma, alpha});
    procs.push_back({"sc_lfdr", Method::sc, Stat::em_lfdr, gamma, alpha});
  }
  if (with_oracle)
    procs.push_back({"sc_oracle", Method::sc, Stat::oracle_lfdr, gamma, alpha});
  procs.push_back({"bh", Method::bh, Stat::theoretical_pvalue, gamma, alpha});
  procs.push_back({"gr", Method::gr, Stat::theoretical_pvalue, gamma, alpha});
  procs.push_back({"lr", Method::lr, Stat::theoretical_pvalue, gamma, alpha});
  return procs;
}

int run_simulate(const SimArgs& a) {
  const int threads = a.threads > 0 ? a.threads : default_threads();

  if (a.preset == "table5") {
    const std::vector<double> rhos{0.01, 0.1, 0.3, 0.5, 0.7, 0.9};
    const auto rows =
        fdx::sim::counterexample_experiment(rhos, a.reps, a.seed, threads);
    if (!a.out_csv.empty()) write_file(a.out_csv, fdx::sim::contradiction_csv(rows));
    json j = {{"config",
               {{"command", "simulate"},
                {"preset", "table5"},
                {"reps", a.reps},
                {"seed", a.seed},
                {"threads", threads}}},
              {"rows", json::array()}};
    for (const auto& r : rows)
      j["rows"].push_back({{"rho", r.rho}, {"percent", r.percent}, {"runs", r.runs}});
    if (!a.out_json.empty()) write_file(a.out_json, j.dump(2) + "\n");
    std::cout << fdx::sim::contradiction_csv(rows);
    return kExitOk;
  }

  struct Cell {
    std::string tag;
    fdx::sim::ScenarioConfig sc;
    std::vector<ProcedureConfig> procs;
  };
  std::vector<Cell> cells;
  fdx::sim::ScenarioConfig base;
  base.m = a.m;
  base.pi = a.pi;
  base.mu = a.mu;
  base.rho = a.rho;

  if (a.preset == "table1") {
    base.kind = fdx::sim::Scenario::iid;
    cells.push_back({"", base, standard_procedures(a.gamma, a.alpha, true, true)});
  } else if (a.preset == "table6") {
    base.kind = fdx::sim::Scenario::iid;
    base.pi = 0.0;
    cells.push_back({"", base, standard_procedures(a.gamma, a.alpha, true, true)});
  } else if (a.preset == "table7") {
    base.kind = fdx::sim::Scenario::iid;
    for (double pi : {0.1, 0.3}) {
      for (double mu : {-1.5, -2.5}) {
        auto sc = base;
        sc.pi = pi;
        sc.mu = mu;
        char tag[48];
        std::snprintf(tag, sizeof(tag), "pi%.1f_mu%.1f/", pi, mu);
        cells.push_back({tag, sc, standard_procedures(a.gamma, a.alpha, true, true)});
      }
    }
  } else if (a.preset == "table2") {
    base.kind = fdx::sim::Scenario::hierarchical;
    std::vector<ProcedureConfig> procs{
        {"proc2_empirical", Method::proc2, Stat::empirical_kernel_lfdr, a.gamma, a.alpha},
        {"gr_theoretical", Method::gr, Stat::theoretical_pvalue, a.gamma, a.alpha},
        {"gr_empirical", Method::gr, Stat::empirical_pvalue, a.gamma, a.alpha},
        {"lr_theoretical", Method::lr, Stat::theoretical_pvalue, a.gamma, a.alpha},
    };
    cells.push_back({"", base, std::move(procs)});
  } else if (a.preset == "custom") {
    if (a.scenario == "iid") {
      base.kind = fdx::sim::Scenario::iid;
    } else if (a.scenario == "equicorr") {
      base.kind = fdx::sim::Scenario::equicorr;
    } else if (a.scenario == "hierarchical") {
      base.kind = fdx::sim::Scenario::hierarchical;
    } else {
      throw input_error("unknown --scenario: " + a.scenario);
    }
    const bool hier = base.kind == fdx::sim::Scenario::hierarchical;
    cells.push_back(
        {"", base, standard_procedures(a.gamma, a.alpha, !hier, !hier)});
    if (hier) {
      cells.back().procs = {
          {"proc2_empirical", Method::proc2, Stat::empirical_kernel_lfdr, a.gamma, a.alpha},
          {"gr_theoretical", Method::gr, Stat::theoretical_pvalue, a.gamma, a.alpha},
      };
    }
  } else {
    throw input_error("unknown --preset: " + a.preset);
  }

  std::string csv;
  json jcells = json::array();
  bool any_invalid = false;
  for (const auto& cell : cells) {
    fdx::sim::RunOptions opts;
    opts.reps = a.reps;
    opts.master_seed = a.seed;
    opts.threads = threads;
    const auto report = fdx::sim::run_experiment(cell.sc, cell.procs, opts);
    any_invalid |= report.invalid;
    auto cell_csv = fdx::sim::report_csv(report);
    if (!cell.tag.empty()) {
      // prefix procedure names with the grid tag
      std::istringstream is(cell_csv);
      std::string line, rebuilt;
      std::getline(is, line);
      if (csv.empty()) rebuilt = line + "\n";
      while (std::getline(is, line)) rebuilt += cell.tag + line + "\n";
      cell_csv = rebuilt;
    } else if (!csv.empty()) {
      cell_csv = cell_csv.substr(cell_csv.find('\n') + 1);
    }
    csv += cell_csv;

    json jr = {{"tag", cell.tag},
               {"scenario",
                {{"kind", a.preset == "table2" || a.scenario == "hierarchical"
                              ? "hierarchical"
                              : (a.scenario == "equicorr" ? "equicorr" : "iid")},
                 {"m", cell.sc.m},
                 {"pi", cell.sc.pi},
                 {"mu", cell.sc.mu},
                 {"rho", cell.sc.rho}}},
               {"reps", report.reps},
               {"exclusions", report.exclusions},
               {"invalid", report.invalid},
               {"procedures", json::array()}};
    for (const auto& p : report.procedures) {
      jr["procedures"].push_back({{"name", cell.tag + p.name},
                                  {"fdx", p.fdx},
                                  {"fdx_se", p.fdx_se},
                                  {"fdr", p.fdr},
                                  {"fdr_se", p.fdr_se},
                                  {"power", p.power},
                                  {"power_se", p.power_se}});
    }
    jcells.push_back(jr);
  }

  if (!a.out_csv.empty()) write_file(a.out_csv, csv);
  json j = {{"config",
             {{"command", "simulate"},
              {"preset", a.preset},
              {"scenario", a.scenario},
              {"m", a.m},
              {"pi", a.pi},
              {"mu", a.mu},
              {"rho", a.rho},
              {"gamma", a.gamma},
              {"alpha", a.alpha},
              {"reps", a.reps},
              {"seed", a.seed},
              {"threads", threads}}},
            {"cells", jcells}};
  if (!a.out_json.empty()) write_file(a.out_json, j.dump(2) + "\n");
  std::cout << csv;
  return any_invalid ? kExitEstimation : kExitOk;
}

// ---------------------------------------------------------------------------
// fdx bench
// ---------------------------------------------------------------------------
int run_bench(std::size_t m, std::uint64_t seed, const std::string& out_json) {
  const fdx::FdxLevel level{0.1, 0.05};
  const auto data = fdx::sim::gen_iid(m, 0.1, -2.0, seed);
  fdx::twogroup::TwoGroupModel model;
  model.pi = 0.1;
  model.null_component = {0.0, 1.0};
  model.alternatives = {{1.0, -2.0, 1.0}};
  const auto lfdr = fdx::twogroup::lfdr_oracle(data.z, model);

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto r2 = fdx::procedures::procedure2(lfdr, level);
  const auto t1 = clock::now();
  const auto r1 = fdx::procedures::procedure1_full_scan(lfdr, level);
  const auto t2 = clock::now();

  const double sec2 = std::chrono::duration<double>(t1 - t0).count();
  const double sec1 = std::chrono::duration<double>(t2 - t1).count();

  if (r1.rejected != r2.rejected) {
    std::cerr << "equivalence violation: full scan K=" << r1.k_final
              << " shortcut K=" << r2.k_final << "\n";
    return kExitEquivalence;
  }
  const auto metrics = fdx::sim::compute_metrics(r2.rejected, data.theta, level.gamma);

  json j = {{"config", {{"command", "bench"}, {"m", m}, {"seed", seed}}},
            {"k1", r2.k1},
            {"k2", r2.k2},
            {"k", r2.k_final},
            {"realized_fdp", metrics.fdp},
            {"simd_backend", fdx::kern::backend_name()},
            {"timing",
             {{"procedure1_full_scan_sec", sec1},
              {"procedure2_sec", sec2},
              {"speedup", sec2 > 0.0 ? sec1 / sec2 : 0.0}}}};
  if (!out_json.empty()) write_file(out_json, j.dump(2) + "\n");
  std::cout << "K1=" << r2.k1 << " K2=" << r2.k2 << " K=" << r2.k_final
            << " fdp=" << metrics.fdp << " proc1=" << sec1 << "s proc2=" << sec2
            << "s speedup=" << (sec2 > 0 ? sec1 / sec2 : 0) << "x\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical-Bayes FDX control for large-scale multiple testing"};
  app.require_subcommand(1);

  TestArgs ta;
  auto* test = app.add_subcommand("test", "test a file of z-values");
  test->add_option("--input", ta.input)->required();
  test->add_option("--gamma", ta.gamma)->required();
  test->add_option("--alpha", ta.alpha)->required();
  test->add_option("--method", ta.method)
      ->check(CLI::IsMember({"proc2", "proc1", "bh", "sc", "lr", "gr"}));
  test->add_option("--null", ta.null_mode)
      ->check(CLI::IsMember({"theoretical", "empirical", "oracle"}));
  test->add_option("--pi", ta.pi);
  test->add_option("--mu", ta.mu);
  test->add_option("--density", ta.density)
      ->check(CLI::IsMember({"mixture", "kernel"}));
  test->add_flag("--randomize", ta.randomize);
  test->add_option("--seed", ta.seed);
  test->add_option("--out-csv", ta.out_csv);
  test->add_option("--out-json", ta.out_json);

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "run a simulation study");
  sim->add_option("--preset", sa.preset)
      ->check(CLI::IsMember({"table1", "table2", "table5", "table6", "table7", "custom"}));
  sim->add_option("--scenario", sa.scenario)
      ->check(CLI::IsMember({"iid", "equicorr", "hierarchical"}));
  sim->add_option("--m", sa.m);
  sim->add_option("--pi", sa.pi);
  sim->add_option("--mu", sa.mu);
  sim->add_option("--rho", sa.rho);
  sim->add_option("--gamma", sa.gamma);
  sim->add_option("--alpha", sa.alpha);
  sim->add_option("--reps", sa.reps);
  sim->add_option("--seed", sa.seed);
  sim->add_option("--threads", sa.threads);
  sim->add_option("--out-csv", sa.out_csv);
  sim->add_option("--out-json", sa.out_json);

  std::size_t bm = 10000;
  std::uint64_t bseed = 1;
  std::string bjson;
  auto* bench = app.add_subcommand("bench", "compare full scan vs shortcuts");
  bench->add_option("--m", bm);
  bench->add_option("--seed", bseed);
  bench->add_option("--out-json", bjson);

  CLI11_PARSE(app, argc, argv);

  try {
    if (test->parsed()) return run_test(ta);
    if (sim->parsed()) return run_simulate(sa);
    if (bench->parsed()) return run_bench(bm, bseed, bjson);
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fdx::domain_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fdx::capacity_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fdx::estimation_error& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kExitEstimation;
  }
  return kExitOk;
}
