#pragma once
// Data-parallel inner loops with runtime backend selection.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active backend is chosen once at startup from
// CPUID, and can be overridden with the FDX_SIMD environment variable
// ("scalar", "avx2", "auto") or force_backend(). The variants are
// equivalence-tested against each other in unit_kernels.

#include <cstddef>
#include <string>

namespace fdx::kern {

enum class Backend { scalar, avx2 };

Backend active_backend();
// Returns false if the requested backend is unavailable on this CPU.
bool force_backend(Backend b);
std::string backend_name();

// One Bernoulli convolution step of a PBD pmf:
//   out[j] = in[j]*(1-p) + in[j-1]*p   for j = 0..n  (in has length n,
//   out has length n+1, in[-1] and in[n] read as 0), clamped to [0,1].
void conv_step(const double* in, std::size_t n, double p, double* out);

// Dense full convolution: out[0..na+nb-2] = sum_i a[i]*b[j-i].
// out must be zero-initialized by the caller.
void conv_full(const double* a, std::size_t na, const double* b, std::size_t nb,
               double* out);

// out[i] = exp(x[i]). Arguments below -708.4 flush to zero, above 709.8
// saturate to +inf, matching std::exp up to subnormal handling.
void exp_batch(const double* x, std::size_t n, double* out);

// out[i] = -0.5*((z[i]-mean)/sd)^2 - log(sd) - log(sqrt(2*pi))
void gauss_logpdf_batch(const double* z, std::size_t n, double mean, double sd,
                        double* out);

namespace detail {
void conv_step_scalar(const double* in, std::size_t n, double p, double* out);
void conv_full_scalar(const double* a, std::size_t na, const double* b,
                      std::size_t nb, double* out);
void exp_batch_scalar(const double* x, std::size_t n, double* out);
void gauss_logpdf_batch_scalar(const double* z, std::size_t n, double mean,
                               double sd, double* out);
#if defined(FDX_WITH_AVX2)
void conv_step_avx2(const double* in, std::size_t n, double p, double* out);
void conv_full_avx2(const double* a, std::size_t na, const double* b,
                    std::size_t nb, double* out);
void exp_batch_avx2(const double* x, std::size_t n, double* out);
void gauss_logpdf_batch_avx2(const double* z, std::size_t n, double mean,
                             double sd, double* out);
#endif
}  // namespace detail

}  // namespace fdx::kern
