#include "fdx/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace fdx::kern {

namespace {

using ConvStepFn = void (*)(const double*, std::size_t, double, double*);
using ConvFullFn = void (*)(const double*, std::size_t, const double*, std::size_t,
                            double*);
using ExpFn = void (*)(const double*, std::size_t, double*);
using GaussFn = void (*)(const double*, std::size_t, double, double, double*);

struct Table {
  Backend backend;
  ConvStepFn conv_step;
  ConvFullFn conv_full;
  ExpFn exp_batch;
  GaussFn gauss_logpdf;
};

constexpr Table kScalar{Backend::scalar, detail::conv_step_scalar,
                        detail::conv_full_scalar, detail::exp_batch_scalar,
                        detail::gauss_logpdf_batch_scalar};

#if defined(FDX_WITH_AVX2)
constexpr Table kAvx2{Backend::avx2, detail::conv_step_avx2, detail::conv_full_avx2,
                      detail::exp_batch_avx2, detail::gauss_logpdf_batch_avx2};

bool cpu_has_avx2() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

Table select_initial() {
#if defined(FDX_WITH_AVX2)
  const char* env = std::getenv("FDX_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return kScalar;
  if (cpu_has_avx2()) return kAvx2;
#endif
  return kScalar;
}

Table g_table = select_initial();

}  // namespace

Backend active_backend() { return g_table.backend; }

bool force_backend(Backend b) {
  if (b == Backend::scalar) {
    g_table = kScalar;
    return true;
  }
#if defined(FDX_WITH_AVX2)
  if (b == Backend::avx2 && cpu_has_avx2()) {
    g_table = kAvx2;
    return true;
  }
#endif
  return false;
}

std::string backend_name() {
  return g_table.backend == Backend::avx2 ? "avx2" : "scalar";
}

void conv_step(const double* in, std::size_t n, double p, double* out) {
  g_table.conv_step(in, n, p, out);
}

void conv_full(const double* a, std::size_t na, const double* b, std::size_t nb,
               double* out) {
  g_table.conv_full(a, na, b, nb, out);
}

void exp_batch(const double* x, std::size_t n, double* out) {
  g_table.exp_batch(x, n, out);
}

void gauss_logpdf_batch(const double* z, std::size_t n, double mean, double sd,
                        double* out) {
  g_table.gauss_logpdf(z, n, mean, sd, out);
}

}  // namespace fdx::kern
