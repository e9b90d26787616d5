#pragma once
// Shared basics: error types, the FDX level pair, deterministic RNG,
// and compensated summation.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdx {

// Thrown on invalid inputs (probabilities outside [0,1], non-finite z, ...).
struct domain_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a fitting routine cannot produce a usable estimate.
struct estimation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when an exact computation is requested beyond its hard size cap.
struct capacity_error : std::length_error {
  using std::length_error::length_error;
};

// FDP tolerance gamma and exceedance probability alpha, both in (0,1).
struct FdxLevel {
  double gamma;
  double alpha;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw domain_error("FdxLevel: gamma must be in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw domain_error("FdxLevel: alpha must be in (0,1)");
  }
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// All randomness in the library flows through this wrapper so that results
// are reproducible across standard-library versions: the raw stream comes
// from mt19937_64 and every distribution transform is spelled out here.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stable child-seed derivation: independent streams per replication index,
// independent of scheduling order.
inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x51A299FD));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via the Marsaglia polar method (second value cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    have_cached_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// ---------------------------------------------------------------------------
// Neumaier compensated summation.
// ---------------------------------------------------------------------------
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace fdx
