#include <algorithm>
#include <cmath>

#include "fdx/kernels.hpp"
#include "fdx/special.hpp"

namespace fdx::kern::detail {

void conv_step_scalar(const double* in, std::size_t n, double p, double* out) {
  const double q = 1.0 - p;
  out[0] = std::min(in[0] * q, 1.0);
  for (std::size_t j = 1; j < n; ++j) {
    out[j] = std::min(in[j] * q + in[j - 1] * p, 1.0);
  }
  out[n] = std::min(in[n - 1] * p, 1.0);
}

void conv_full_scalar(const double* a, std::size_t na, const double* b,
                      std::size_t nb, double* out) {
  for (std::size_t i = 0; i < na; ++i) {
    const double ai = a[i];
    double* o = out + i;
    for (std::size_t j = 0; j < nb; ++j) o[j] += ai * b[j];
  }
}

void exp_batch_scalar(const double* x, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void gauss_logpdf_batch_scalar(const double* z, std::size_t n, double mean,
                               double sd, double* out) {
  const double inv = 1.0 / sd;
  const double c = -std::log(sd) - fdx::num::kLogSqrt2Pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (z[i] - mean) * inv;
    out[i] = -0.5 * u * u + c;
  }
}

}  // namespace fdx::kern::detail
