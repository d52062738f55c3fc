#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "capsid/kernels.hpp"

// NEON backend. float64x2 lanes cover two of the four mod-4 stripes, so
// reductions carry two accumulators; gemm_nn keeps the per-element
// ascending-k fused multiply-add chain by vectorising over columns only.

namespace capsid::kernels {
namespace {

void n_gemm_nn(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc) {
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    double* crow = c + i * ldc;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const float64x2_t avv = vdupq_n_f64(av);
      const double* brow = b + kk * ldb;
      for (std::size_t j = 0; j < n2; j += 2)
        vst1q_f64(crow + j,
                  vfmaq_f64(vld1q_f64(crow + j), avv, vld1q_f64(brow + j)));
      for (std::size_t j = n2; j < n; ++j)
        crow[j] = std::fma(av, brow[j], crow[j]);
    }
  }
}

inline double reduce_stripes(float64x2_t s01, float64x2_t s23) {
  const double a = vgetq_lane_f64(s01, 0) + vgetq_lane_f64(s01, 1);
  const double b = vgetq_lane_f64(s23, 0) + vgetq_lane_f64(s23, 1);
  return a + b;
}

double n_dot(const double* x, const double* y, std::size_t n) {
  float64x2_t s01 = vdupq_n_f64(0.0), s23 = vdupq_n_f64(0.0);
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    s01 = vfmaq_f64(s01, vld1q_f64(x + i), vld1q_f64(y + i));
    s23 = vfmaq_f64(s23, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = reduce_stripes(s01, s23);
  for (std::size_t i = n4; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void n_gemm_nt(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * ldc + j] += n_dot(a + i * lda, b + j * ldb, k);
}

double n_sum(const double* x, std::size_t n) {
  float64x2_t s01 = vdupq_n_f64(0.0), s23 = vdupq_n_f64(0.0);
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    s01 = vaddq_f64(s01, vld1q_f64(x + i));
    s23 = vaddq_f64(s23, vld1q_f64(x + i + 2));
  }
  double s = reduce_stripes(s01, s23);
  for (std::size_t i = n4; i < n; ++i) s += x[i];
  return s;
}

double n_sq_sum(const double* x, std::size_t n) { return n_dot(x, x, n); }

void n_axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(a);
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (std::size_t i = n2; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void n_add(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (std::size_t i = n2; i < n; ++i) out[i] = x[i] + y[i];
}

void n_sub(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2)
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (std::size_t i = n2; i < n; ++i) out[i] = x[i] - y[i];
}

void n_mul(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (std::size_t i = n2; i < n; ++i) out[i] = x[i] * y[i];
}

void n_scale(const double* x, double a, double* out, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(a);
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), av));
  for (std::size_t i = n2; i < n; ++i) out[i] = x[i] * a;
}

void n_relu(const double* x, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    const uint64x2_t gt = vcgtq_f64(v, zero);
    vst1q_f64(out + i,
              vreinterpretq_f64_u64(
                  vandq_u64(vreinterpretq_u64_f64(v), gt)));
  }
  for (std::size_t i = n2; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

bool n_all_finite(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

const Backend kNeon = {
    "neon", n_gemm_nn, n_gemm_nt, n_dot,   n_sum,  n_sq_sum, n_axpy,
    n_add,  n_sub,     n_mul,     n_scale, n_relu, n_all_finite,
};

}  // namespace

const Backend* neon_backend() { return &kNeon; }

}  // namespace capsid::kernels

#endif
