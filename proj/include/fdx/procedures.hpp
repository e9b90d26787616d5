#pragma once
// FDX decision rules: the step-up PBD procedure, its shortcut form, and
// the comparator procedures (BH, adaptive-z, Lehmann-Romano, Guo-Romano).

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fdx/common.hpp"
#include "fdx/twogroup.hpp"

namespace fdx::procedures {

struct RandomizedExtra {
  double probability = 0.0;   // chance of one additional rejection
  bool extra_rejected = false;
  std::uint32_t index = 0;    // hypothesis index that was the candidate
};

struct RejectionResult {
  std::size_t k_final = 0;
  std::vector<std::uint32_t> rejected;  // original indices, in lfdr rank order
  std::size_t k1 = 0;                   // running-mean shortcut bound
  std::size_t k2 = 0;                   // geometric-mean binomial bound
  double tail_at_k = 0.0;               // P(false count > gamma*K | data)
  std::optional<RandomizedExtra> randomized;
};

struct ProcedureOptions {
  bool randomize = false;
  std::uint64_t seed = 0;
};

// Step-up rule: K = max{k : P(PBD(p^(k)) > gamma*k) <= alpha}, rejecting
// the K smallest lfdr values. Computed by one incremental ascending
// convolution sweep. k1/k2 are reported equal to K here.
RejectionResult procedure1(const twogroup::LfdrVector& lfdr, const FdxLevel& level,
                           const ProcedureOptions& opts = {});

// Literal full descending scan with a fresh PBD evaluation at each k;
// the reference implementation benchmarked against the shortcut form.
RejectionResult procedure1_full_scan(const twogroup::LfdrVector& lfdr,
                                     const FdxLevel& level,
                                     const ProcedureOptions& opts = {});

// Shortcut form: running-mean bound K1, geometric-mean binomial bound
// K2 <= K1, then the PBD scan only below K2. Returns the identical
// rejection set as procedure1 on every input.
RejectionResult procedure2(const twogroup::LfdrVector& lfdr, const FdxLevel& level,
                           const ProcedureOptions& opts = {});

// Benjamini-Hochberg step-up at FDR level alpha_fdr.
std::vector<std::uint32_t> bh(std::span<const double> pvalues, double alpha_fdr);

// Adaptive-z / running-mean lfdr rule at FDR level alpha_fdr.
std::vector<std::uint32_t> sc_adaptive(const twogroup::LfdrVector& lfdr,
                                       double alpha_fdr);

// Lehmann-Romano step-down FDP procedure.
std::vector<std::uint32_t> lehmann_romano(std::span<const double> pvalues,
                                          const FdxLevel& level);

// Guo-Romano step-down FDP procedure; critical constants from binomial
// tails, solved by bisection to 1e-10.
std::vector<std::uint32_t> guo_romano(std::span<const double> pvalues,
                                      const FdxLevel& level);

// i-th Guo-Romano critical constant (1-based i).
double guo_romano_critical(std::size_t i, std::size_t m, const FdxLevel& level);

// i-th Lehmann-Romano critical constant (1-based i).
double lehmann_romano_critical(std::size_t i, std::size_t m, const FdxLevel& level);

}  // namespace fdx::procedures
