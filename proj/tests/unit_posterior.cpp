#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fdx/common.hpp"
#include "fdx/pbd.hpp"
#include "fdx/posterior.hpp"
#include "fdx/twogroup.hpp"

using namespace fdx;
using posterior::DependenceModel;

namespace {

std::vector<double> draw_exchangeable(std::size_t m, const DependenceModel& dm,
                                      Rng& rng, std::vector<std::uint8_t>* theta_out) {
  const double w = rng.normal();
  std::vector<double> z(m);
  if (theta_out) theta_out->resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const bool t = rng.bernoulli(dm.pi);
    if (theta_out) (*theta_out)[i] = t;
    z[i] = (t ? dm.mu : 0.0) + std::sqrt(dm.rho) * w +
           std::sqrt(1.0 - dm.rho) * rng.normal();
  }
  return z;
}

}  // namespace

TEST_CASE("gauss-hermite rule integrates normal moments exactly") {
  for (int n : {8, 64, 128}) {
    const auto rule = posterior::gauss_hermite_normal(n);
    double s0 = 0.0, s2 = 0.0, s4 = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      s0 += rule.weights[i];
      s2 += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
      s4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
    }
    CHECK(s0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s4 == doctest::Approx(3.0).epsilon(1e-11));
  }
}

TEST_CASE("enumeration: independence factorizes") {
  DependenceModel dm;
  dm.mu = -2.0;
  dm.rho = 0.0;
  dm.pi = 0.2;
  Rng rng(31);
  const auto z = draw_exchangeable(8, dm, rng, nullptr);
  const auto post = posterior::enumerate_posterior(z, dm);

  twogroup::TwoGroupModel model;
  model.pi = 0.2;
  model.null_component = {0.0, 1.0};
  model.alternatives = {{1.0, -2.0, 1.0}};
  const auto marginal = twogroup::lfdr_oracle(z, model);
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(std::abs(post.marginal_lfdr[i] - marginal.values[i]) <= 1e-10);

  // exact tail equals the PBD tail on the marginals under independence
  const std::vector<std::uint32_t> sel{0, 1, 2, 3, 4};
  std::vector<double> probs;
  for (auto i : sel) probs.push_back(post.marginal_lfdr[i]);
  for (double gamma : {0.1, 0.3, 0.5}) {
    const auto d = pbd::pmf(probs);
    CHECK(std::abs(post.exact_tail(sel, gamma) -
                   pbd::tail_gt_scaled(d, gamma, static_cast<std::int64_t>(sel.size()))) <=
          1e-10);
  }
}

TEST_CASE("enumeration: normalization, pi = 0, capacity") {
  DependenceModel dm;
  dm.mu = -1.5;
  dm.rho = 0.4;
  dm.pi = 0.3;
  Rng rng(32);
  const auto z = draw_exchangeable(10, dm, rng, nullptr);
  const auto post = posterior::enumerate_posterior(z, dm);
  KahanSum s;
  for (double v : post.config_prob) s.add(v);
  CHECK(std::abs(s.value() - 1.0) <= 1e-10);

  auto dm0 = dm;
  dm0.pi = 0.0;
  const auto post0 = posterior::enumerate_posterior(z, dm0);
  CHECK(post0.config_prob[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : post0.marginal_lfdr) CHECK(v == doctest::Approx(1.0));

  CHECK_THROWS_AS(posterior::enumerate_posterior(std::vector<double>(17, 0.0), dm),
                  capacity_error);
}

TEST_CASE("exchangeable lfdr via quadrature") {
  SUBCASE("rho = 0 coincides with the oracle lfdr") {
    DependenceModel dm;
    dm.mu = -2.0;
    dm.rho = 0.0;
    dm.pi = 0.2;
    Rng rng(33);
    const auto z = draw_exchangeable(200, dm, rng, nullptr);
    const auto got = posterior::exchangeable_lfdr(z, dm);
    twogroup::TwoGroupModel model;
    model.pi = 0.2;
    model.null_component = {0.0, 1.0};
    model.alternatives = {{1.0, -2.0, 1.0}};
    const auto want = twogroup::lfdr_oracle(z, model);
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(std::abs(got.values[i] - want.values[i]) <= 1e-8);
  }

  SUBCASE("matches enumeration marginals for m <= 12") {
    Rng rng(34);
    for (double rho : {0.2, 0.5, 0.8}) {
      DependenceModel dm;
      dm.mu = -1.5;
      dm.rho = rho;
      dm.pi = 0.3;
      for (int rep = 0; rep < 5; ++rep) {
        const auto z = draw_exchangeable(11, dm, rng, nullptr);
        const auto got = posterior::exchangeable_lfdr(z, dm);
        const auto want = posterior::enumerate_posterior(z, dm);
        for (std::size_t i = 0; i < z.size(); ++i)
          CHECK(std::abs(got.values[i] - want.marginal_lfdr[i]) <= 1e-6);
      }
    }
  }

  SUBCASE("ranking equals ascending z for mu < 0 across rho") {
    Rng rng(35);
    int draws = 0;
    for (double rho : {0.0, 0.3, 0.6, 0.9}) {
      DependenceModel dm;
      dm.mu = -1.5;
      dm.rho = rho;
      dm.pi = 0.3;
      for (int rep = 0; rep < 25; ++rep, ++draws) {
        const auto z = draw_exchangeable(12, dm, rng, nullptr);
        const auto got = posterior::exchangeable_lfdr(z, dm);
        std::vector<std::uint32_t> byz(z.size());
        std::iota(byz.begin(), byz.end(), 0u);
        std::stable_sort(byz.begin(), byz.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return z[a] < z[b]; });
        CHECK(got.rank == byz);
      }
    }
    CHECK(draws == 100);
  }

  SUBCASE("blocks are rejected") {
    DependenceModel dm;
    dm.blocks = std::vector<int>{0, 0, 1, 1};
    CHECK_THROWS_AS(posterior::exchangeable_lfdr(std::vector<double>(4, 0.0), dm),
                    domain_error);
  }
}
