#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fdx/common.hpp"
#include "fdx/pbd.hpp"
#include "fdx/procedures.hpp"
#include "fdx/sim.hpp"
#include "fdx/special.hpp"
#include "fdx/twogroup.hpp"

using namespace fdx;
using procedures::ProcedureOptions;
using twogroup::LfdrVector;
using twogroup::make_lfdr_vector;

// The spec'd independent oracle for the step-up rule: a descending scan
// evaluating a from-scratch PBD tail at every k with plain arithmetic.
namespace reference {

double pbd_tail_gamma_k(const std::vector<double>& sorted, std::size_t k, double gamma) {
  std::vector<double> mass{1.0};
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> nxt(mass.size() + 1, 0.0);
    for (std::size_t j = 0; j < mass.size(); ++j) {
      nxt[j] += mass[j] * (1.0 - sorted[i]);
      nxt[j + 1] += mass[j] * sorted[i];
    }
    mass = std::move(nxt);
  }
  const auto jmin = static_cast<std::size_t>(num::floor_scaled(gamma, k) + 1);
  double s = 0.0;
  for (std::size_t j = mass.size(); j-- > jmin;) s += mass[j];
  return s;
}

std::size_t descending_scan(const std::vector<double>& sorted, const FdxLevel& lv) {
  for (std::size_t k = sorted.size(); k >= 1; --k)
    if (pbd_tail_gamma_k(sorted, k, lv.gamma) <= lv.alpha) return k;
  return 0;
}

}  // namespace reference

namespace {

LfdrVector random_lfdr(std::size_t m, Rng& rng) {
  // mixed Beta-ish draws: a spike of small values plus bulk near 1
  std::vector<double> v(m);
  for (auto& x : v) {
    if (rng.bernoulli(0.15)) {
      const double u = rng.uniform();
      x = std::pow(u, 3.0) * 0.6;  // concentrated near 0
    } else {
      x = 1.0 - std::pow(rng.uniform(), 2.0) * 0.7;
    }
  }
  return make_lfdr_vector(std::move(v));
}

LfdrVector oracle_lfdr_data(std::size_t m, double pi, double mu, std::uint64_t seed) {
  const auto data = sim::gen_iid(m, pi, mu, seed);
  twogroup::TwoGroupModel model;
  model.pi = pi;
  model.null_component = {0.0, 1.0};
  model.alternatives = {{1.0, mu, 1.0}};
  return twogroup::lfdr_oracle(data.z, model);
}

}  // namespace

TEST_CASE("procedure1 singletons and degenerate inputs") {
  const FdxLevel lv{0.5, 0.05};
  auto r1 = procedures::procedure1(make_lfdr_vector({0.03}), lv);
  CHECK(r1.k_final == 1);
  CHECK(r1.tail_at_k == doctest::Approx(0.03));
  auto r2 = procedures::procedure1(make_lfdr_vector({0.07}), lv);
  CHECK(r2.k_final == 0);
  CHECK(r2.rejected.empty());

  // all-zero lfdr: everything is rejectable with zero tail
  const std::size_t m = 40;
  auto rz = procedures::procedure1(make_lfdr_vector(std::vector<double>(m, 0.0)),
                                   FdxLevel{0.1, 0.05});
  CHECK(rz.k_final == m);
  CHECK(rz.tail_at_k == 0.0);
}

TEST_CASE("procedure1 equals the descending-scan oracle") {
  Rng rng(1001);
  for (int rep = 0; rep < 8; ++rep) {
    const auto lfdr = random_lfdr(200, rng);
    const FdxLevel lv{0.1, 0.05};
    const auto got = procedures::procedure1(lfdr, lv);
    const auto want = reference::descending_scan(lfdr.sorted_values(), lv);
    CHECK(got.k_final == want);
  }
}

TEST_CASE("procedure1_full_scan equals procedure1") {
  Rng rng(1002);
  for (int rep = 0; rep < 6; ++rep) {
    const auto lfdr = random_lfdr(300, rng);
    const FdxLevel lv{0.1, 0.05};
    const auto a = procedures::procedure1(lfdr, lv);
    const auto b = procedures::procedure1_full_scan(lfdr, lv);
    CHECK(a.k_final == b.k_final);
    CHECK(a.rejected == b.rejected);
    CHECK(a.tail_at_k == b.tail_at_k);
  }
}

TEST_CASE("procedure2 running-mean bound example") {
  const auto lfdr = make_lfdr_vector({0.01, 0.05, 0.20});
  const auto res = procedures::procedure2(lfdr, FdxLevel{0.1, 0.05});
  CHECK(res.k1 == 3);  // cumulative means 0.01, 0.03, 0.0867 <= 0.145
}

TEST_CASE("procedure1 and procedure2 are equivalent") {
  Rng rng(1003);
  const FdxLevel lv{0.05, 0.05};
  for (int rep = 0; rep < 60; ++rep) {
    LfdrVector lfdr;
    if (rep % 2 == 0) {
      lfdr = random_lfdr(2000, rng);
    } else {
      lfdr = oracle_lfdr_data(2000, 0.2, -2.0, rng.bits());
    }
    const auto r1 = procedures::procedure1(lfdr, lv);
    const auto r2 = procedures::procedure2(lfdr, lv);
    CHECK(r1.k_final == r2.k_final);
    CHECK(r1.rejected == r2.rejected);
    CHECK(r1.tail_at_k == r2.tail_at_k);
    CHECK(r2.k_final <= r2.k2);
    CHECK(r2.k2 <= r2.k1);
    CHECK(r2.k1 <= lfdr.size());
  }
}

TEST_CASE("shortcut safety: no k above the bounds passes the PBD gate") {
  Rng rng(1004);
  for (int rep = 0; rep < 4; ++rep) {
    const auto lfdr = oracle_lfdr_data(500, 0.25, -2.2, rng.bits());
    const FdxLevel lv{0.1, 0.05};
    const auto r2 = procedures::procedure2(lfdr, lv);
    const auto sorted = lfdr.sorted_values();
    for (std::size_t k = r2.k2 + 1; k <= sorted.size(); ++k) {
      CHECK(reference::pbd_tail_gamma_k(sorted, k, lv.gamma) > lv.alpha);
    }
  }
}

TEST_CASE("entropy prefilter count never exceeds the rejection count") {
  Rng rng(1005);
  const FdxLevel lv{0.1, 0.05};
  const double eps = pbd::entropy_prefilter_threshold(lv);
  for (int rep = 0; rep < 10; ++rep) {
    auto lfdr = random_lfdr(1000, rng);
    // plant a few bulk-rejectable hypotheses at or below eps'
    for (int i = 0; i < 5; ++i) lfdr.values[i] = eps * rng.uniform();
    lfdr = make_lfdr_vector(std::move(lfdr.values));
    const auto r = procedures::procedure2(lfdr, lv);
    std::size_t n0 = 0;
    for (double v : lfdr.values)
      if (v <= eps) ++n0;
    CHECK(n0 <= r.k_final);
  }
}

TEST_CASE("randomized variant") {
  const FdxLevel lv{0.5, 0.05};

  SUBCASE("rejects K or K+1 with a valid probability, same for both forms") {
    Rng rng(1006);
    for (int rep = 0; rep < 30; ++rep) {
      const auto lfdr = random_lfdr(150, rng);
      const ProcedureOptions opts{true, rep * 7u + 1u};
      const auto r1 = procedures::procedure1(lfdr, lv, opts);
      const auto r2 = procedures::procedure2(lfdr, lv, opts);
      CHECK(r1.rejected == r2.rejected);
      REQUIRE(r1.randomized.has_value() == r2.randomized.has_value());
      if (r1.randomized) {
        CHECK(r1.randomized->probability >= 0.0);
        CHECK(r1.randomized->probability <= 1.0);
        CHECK(r1.randomized->probability == r2.randomized->probability);
        const auto extra = r1.randomized->extra_rejected ? 1u : 0u;
        CHECK(r1.rejected.size() == r1.k_final + extra);
      }
    }
  }

  SUBCASE("K = 0 randomization fires with probability alpha / T(1)") {
    const auto lfdr = make_lfdr_vector({0.4, 0.9});
    const auto r = procedures::procedure1(lfdr, FdxLevel{0.5, 0.05}, {true, 3});
    CHECK(r.k_final == 0);
    REQUIRE(r.randomized.has_value());
    CHECK(r.randomized->probability == doctest::Approx(0.05 / 0.4));
  }

  SUBCASE("pure-null estimated lfdr of one means an extra rejection w.p. alpha") {
    const auto lfdr = make_lfdr_vector(std::vector<double>(100, 1.0));
    const auto r = procedures::procedure2(lfdr, FdxLevel{0.05, 0.05}, {true, 11});
    CHECK(r.k_final == 0);
    REQUIRE(r.randomized.has_value());
    CHECK(r.randomized->probability == doctest::Approx(0.05));
  }
}

TEST_CASE("monotone in alpha") {
  Rng rng(1007);
  for (int rep = 0; rep < 10; ++rep) {
    const auto lfdr = random_lfdr(800, rng);
    std::size_t prev = 0;
    for (double alpha : {0.01, 0.02, 0.05, 0.1, 0.2}) {
      const auto r = procedures::procedure2(lfdr, FdxLevel{0.1, alpha});
      CHECK(r.k_final >= prev);
      prev = r.k_final;
    }
  }
}

TEST_CASE("conditional calibration of the reported tail") {
  // resampling theta | z from Bernoulli(lfdr) reproduces the PBD tail
  const auto lfdr = oracle_lfdr_data(2000, 0.2, -2.0, 913);
  const FdxLevel lv{0.05, 0.05};
  const auto res = procedures::procedure2(lfdr, lv);
  REQUIRE(res.k_final >= 10);
  const auto sorted = lfdr.sorted_values();
  Rng rng(914);
  const int B = 10000;
  int exceed = 0;
  for (int b = 0; b < B; ++b) {
    std::int64_t falses = 0;
    for (std::size_t j = 0; j < res.k_final; ++j)
      if (rng.bernoulli(sorted[j])) ++falses;
    if (num::count_exceeds(falses, lv.gamma, static_cast<std::int64_t>(res.k_final)))
      ++exceed;
  }
  const double freq = static_cast<double>(exceed) / B;
  const double se = std::sqrt(res.tail_at_k * (1.0 - res.tail_at_k) / B);
  CHECK(std::abs(freq - res.tail_at_k) <= 3.0 * se + 1e-9);
}

TEST_CASE("bh step-up") {
  CHECK(procedures::bh(std::vector<double>{0.01, 0.02, 0.2, 0.9}, 0.05) ==
        std::vector<std::uint32_t>{0, 1});
  CHECK(procedures::bh(std::vector<double>{1.0, 1.0, 1.0}, 0.05).empty());
  CHECK(procedures::bh(std::vector<double>{0.04}, 0.05) ==
        std::vector<std::uint32_t>{0});
  CHECK_THROWS_AS(procedures::bh(std::vector<double>{0.0, 0.5}, 0.05), domain_error);
}

TEST_CASE("adaptive-z running mean rule") {
  const auto lfdr = make_lfdr_vector({0.01, 0.08, 0.9});
  CHECK(procedures::sc_adaptive(lfdr, 0.05) == std::vector<std::uint32_t>{0, 1});

  const auto high = make_lfdr_vector({0.2, 0.3});
  CHECK(procedures::sc_adaptive(high, 0.05).empty());
  const auto edge = make_lfdr_vector({0.04, 0.9});
  CHECK(procedures::sc_adaptive(edge, 0.05).size() == 1);

  // matches the procedure2 running-mean bound at level alpha + gamma(1-alpha)
  Rng rng(1008);
  const auto rl = random_lfdr(1500, rng);
  const FdxLevel lv{0.1, 0.05};
  const auto r2 = procedures::procedure2(rl, lv);
  const auto sc = procedures::sc_adaptive(rl, lv.alpha + lv.gamma * (1.0 - lv.alpha));
  CHECK(sc.size() == r2.k1);
}

TEST_CASE("lehmann-romano constants and scan") {
  const FdxLevel lv{0.1, 0.05};
  CHECK(procedures::lehmann_romano_critical(1, 4, lv) == doctest::Approx(0.0125));
  CHECK(procedures::lehmann_romano_critical(2, 4, lv) ==
        doctest::Approx(0.05 / 3.0));
  // step-down stops immediately when the smallest p fails
  CHECK(procedures::lehmann_romano(std::vector<double>{0.9, 0.8, 0.7, 0.95}, lv)
            .empty());
}

TEST_CASE("guo-romano constants dominate lehmann-romano") {
  const FdxLevel lv{0.1, 0.05};
  for (std::size_t m : {10u, 100u}) {
    for (std::size_t i = 1; i <= m; ++i) {
      CHECK(procedures::guo_romano_critical(i, m, lv) + 1e-12 >=
            procedures::lehmann_romano_critical(i, m, lv));
    }
  }
  // m = 1, gamma = 0.5: c_1 solves P(Bin(1,u) >= 1) = u <= alpha
  CHECK(procedures::guo_romano_critical(1, 1, FdxLevel{0.5, 0.05}) ==
        doctest::Approx(0.05).epsilon(1e-7));
}

TEST_CASE("lr and gr keep FDX near level on iid data") {
  const FdxLevel lv{0.1, 0.05};
  const std::size_t m = 500;
  const int reps = 1200;
  int exc_lr = 0, exc_gr = 0;
  for (int r = 0; r < reps; ++r) {
    const auto data = sim::gen_iid(m, 0.2, -2.0, child_seed(77, r));
    const auto p = twogroup::pvalue_from_z(data.z, {0.0, 1.0});
    const auto lr = procedures::lehmann_romano(p, lv);
    const auto gr = procedures::guo_romano(p, lv);
    const auto ml = sim::compute_metrics(lr, data.theta, lv.gamma);
    const auto mg = sim::compute_metrics(gr, data.theta, lv.gamma);
    exc_lr += ml.exceeded;
    exc_gr += mg.exceeded;
    CHECK(gr.size() >= lr.size());  // GR dominates LR pointwise
  }
  CHECK(static_cast<double>(exc_lr) / reps <= lv.alpha + 0.01);
  CHECK(static_cast<double>(exc_gr) / reps <= lv.alpha + 0.01);
}
