#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fdx/common.hpp"
#include "fdx/kernels.hpp"

using namespace fdx;

namespace {

std::vector<double> random_probs(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  for (auto& v : p) v = rng.uniform();
  return p;
}

// total variation between two pmf-like arrays
double tv(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

std::vector<double> conv_prefix(const std::vector<double>& p,
                                void (*step)(const double*, std::size_t, double,
                                             double*)) {
  std::vector<double> a(p.size() + 1, 0.0), b(p.size() + 1, 0.0);
  a[0] = 1.0;
  double* cur = a.data();
  double* nxt = b.data();
  std::size_t n = 1;
  for (double v : p) {
    step(cur, n, v, nxt);
    std::swap(cur, nxt);
    ++n;
  }
  return {cur, cur + n};
}

}  // namespace

TEST_CASE("scalar conv_step matches a plain reference") {
  Rng rng(11);
  for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 9u, 33u}) {
    auto p = random_probs(n, rng);
    auto got = conv_prefix(p, kern::detail::conv_step_scalar);
    // reference: naive O(k^2) triangle
    std::vector<double> ref{1.0};
    for (double v : p) {
      std::vector<double> nxt(ref.size() + 1, 0.0);
      for (std::size_t j = 0; j < ref.size(); ++j) {
        nxt[j] += ref[j] * (1.0 - v);
        nxt[j + 1] += ref[j] * v;
      }
      ref = nxt;
    }
    for (std::size_t j = 0; j < ref.size(); ++j)
      CHECK(got[j] == doctest::Approx(ref[j]).epsilon(1e-13));
  }
}

#if defined(__x86_64__)
TEST_CASE("avx2 variants agree with scalar within tight tolerance") {
  if (!kern::force_backend(kern::Backend::avx2)) {
    MESSAGE("avx2 unavailable on this host; skipping");
    return;
  }
  Rng rng(7);

  SUBCASE("conv_step equivalence on pmfs") {
    for (std::size_t n : {1u, 2u, 4u, 5u, 7u, 64u, 1001u, 10000u}) {
      auto p = random_probs(n, rng);
      auto simd = conv_prefix(p, [](const double* in, std::size_t k, double pr,
                                    double* out) { kern::conv_step(in, k, pr, out); });
      kern::force_backend(kern::Backend::scalar);
      auto scalar = conv_prefix(p, [](const double* in, std::size_t k, double pr,
                                      double* out) { kern::conv_step(in, k, pr, out); });
      kern::force_backend(kern::Backend::avx2);
      CHECK(tv(simd, scalar) < 1e-12);
    }
  }

  SUBCASE("exp_batch matches std::exp") {
    std::vector<double> x;
    for (double v = -700.0; v <= 700.0; v += 0.37) x.push_back(v);
    for (int i = 0; i < 4000; ++i) x.push_back(rng.uniform(-60.0, 1.0));
    x.push_back(0.0);
    x.push_back(-0.0);
    std::vector<double> out(x.size());
    kern::exp_batch(x.data(), x.size(), out.data());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ref = std::exp(x[i]);
      CHECK(std::abs(out[i] - ref) <= 1e-14 * ref);
    }
    // saturation behavior
    const double extremes[] = {-800.0, 800.0};
    double eout[2];
    kern::exp_batch(extremes, 2, eout);
    CHECK(eout[0] == 0.0);
    CHECK(std::isinf(eout[1]));
  }

  SUBCASE("gauss_logpdf_batch equivalence") {
    auto z = random_probs(999, rng);
    for (auto& v : z) v = v * 20.0 - 10.0;
    std::vector<double> a(z.size()), b(z.size());
    kern::gauss_logpdf_batch(z.data(), z.size(), 0.3, 1.7, a.data());
    kern::force_backend(kern::Backend::scalar);
    kern::gauss_logpdf_batch(z.data(), z.size(), 0.3, 1.7, b.data());
    kern::force_backend(kern::Backend::avx2);
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13));
  }

  SUBCASE("conv_full equivalence") {
    auto a = random_probs(37, rng);
    auto b = random_probs(81, rng);
    std::vector<double> o1(a.size() + b.size() - 1, 0.0), o2 = o1;
    kern::conv_full(a.data(), a.size(), b.data(), b.size(), o1.data());
    kern::force_backend(kern::Backend::scalar);
    kern::conv_full(a.data(), a.size(), b.data(), b.size(), o2.data());
    kern::force_backend(kern::Backend::avx2);
    for (std::size_t i = 0; i < o1.size(); ++i)
      CHECK(o1[i] == doctest::Approx(o2[i]).epsilon(1e-12));
  }
}
#endif
