#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "capsid/kernels.hpp"

// AVX2/FMA backend. Arithmetic mirrors the scalar reference exactly:
// gemm_nn keeps one ascending-k fused multiply-add chain per output element
// (cache blocking only stores and reloads exact intermediate doubles), and
// the reduction kernels map the four mod-4 stripes onto the four lanes of a
// ymm accumulator, combined in the same ((s0+s1)+(s2+s3)) order.

namespace capsid::kernels {
namespace {

constexpr std::size_t KC = 256;  // k block: A/B panels stay cache resident
constexpr std::size_t MC = 96;   // rows of A packed per block
constexpr std::size_t MR = 4;    // micro tile rows
constexpr std::size_t NR = 8;    // micro tile cols

// Panels are k-major with fixed MR/NR minor strides, zero padded on edge
// tiles. Padding rows/cols multiply into lanes that are never stored back,
// so they cannot perturb valid elements.
void pack_a(const double* a, std::size_t lda, std::size_t rows,
            std::size_t kc, double* ap) {
  for (std::size_t kk = 0; kk < kc; ++kk)
    for (std::size_t r = 0; r < MR; ++r)
      ap[kk * MR + r] = r < rows ? a[r * lda + kk] : 0.0;
}

void pack_b(const double* b, std::size_t ldb, std::size_t cols,
            std::size_t kc, double* bp) {
  for (std::size_t kk = 0; kk < kc; ++kk) {
    const double* brow = b + kk * ldb;
    for (std::size_t cc = 0; cc < NR; ++cc)
      bp[kk * NR + cc] = cc < cols ? brow[cc] : 0.0;
  }
}

inline void micro_4x8(std::size_t kc, const double* ap, const double* bp,
                      double* c0, double* c1, double* c2, double* c3) {
  __m256d c00 = _mm256_loadu_pd(c0), c01 = _mm256_loadu_pd(c0 + 4);
  __m256d c10 = _mm256_loadu_pd(c1), c11 = _mm256_loadu_pd(c1 + 4);
  __m256d c20 = _mm256_loadu_pd(c2), c21 = _mm256_loadu_pd(c2 + 4);
  __m256d c30 = _mm256_loadu_pd(c3), c31 = _mm256_loadu_pd(c3 + 4);
  for (std::size_t kk = 0; kk < kc; ++kk) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d av = _mm256_broadcast_sd(ap + 0);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
    ap += MR;
    bp += NR;
  }
  _mm256_storeu_pd(c0, c00);
  _mm256_storeu_pd(c0 + 4, c01);
  _mm256_storeu_pd(c1, c10);
  _mm256_storeu_pd(c1 + 4, c11);
  _mm256_storeu_pd(c2, c20);
  _mm256_storeu_pd(c2 + 4, c21);
  _mm256_storeu_pd(c3, c30);
  _mm256_storeu_pd(c3 + 4, c31);
}

void x_gemm_nn(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  thread_local std::vector<double> apack;
  thread_local std::vector<double> bpack;
  const std::size_t n_jp = (n + NR - 1) / NR;
  bpack.resize(n_jp * KC * NR);
  apack.resize(((MC + MR - 1) / MR) * KC * MR);

  for (std::size_t kb = 0; kb < k; kb += KC) {
    const std::size_t kc = kb + KC < k ? KC : k - kb;
    for (std::size_t jp = 0; jp < n_jp; ++jp) {
      const std::size_t j0 = jp * NR;
      pack_b(b + kb * ldb + j0, ldb, n - j0 < NR ? n - j0 : NR, kc,
             bpack.data() + jp * KC * NR);
    }
    for (std::size_t ib = 0; ib < m; ib += MC) {
      const std::size_t mc = ib + MC < m ? MC : m - ib;
      const std::size_t n_it = (mc + MR - 1) / MR;
      for (std::size_t it = 0; it < n_it; ++it) {
        const std::size_t i0 = ib + it * MR;
        pack_a(a + i0 * lda + kb, lda, mc - it * MR < MR ? mc - it * MR : MR,
               kc, apack.data() + it * KC * MR);
      }
      for (std::size_t jp = 0; jp < n_jp; ++jp) {
        const std::size_t j0 = jp * NR;
        const std::size_t jr = n - j0 < NR ? n - j0 : NR;
        const double* bp = bpack.data() + jp * KC * NR;
        for (std::size_t it = 0; it < n_it; ++it) {
          const std::size_t i0 = ib + it * MR;
          const std::size_t ir = mc - it * MR < MR ? mc - it * MR : MR;
          const double* ap = apack.data() + it * KC * MR;
          if (ir == MR && jr == NR) {
            double* crow = c + i0 * ldc + j0;
            micro_4x8(kc, ap, bp, crow, crow + ldc, crow + 2 * ldc,
                      crow + 3 * ldc);
          } else {
            double tmp[MR * NR];
            std::memset(tmp, 0, sizeof tmp);
            for (std::size_t r = 0; r < ir; ++r)
              std::memcpy(tmp + r * NR, c + (i0 + r) * ldc + j0,
                          jr * sizeof(double));
            micro_4x8(kc, ap, bp, tmp, tmp + NR, tmp + 2 * NR, tmp + 3 * NR);
            for (std::size_t r = 0; r < ir; ++r)
              std::memcpy(c + (i0 + r) * ldc + j0, tmp + r * NR,
                          jr * sizeof(double));
          }
        }
      }
    }
  }
}

// Lanes of one accumulator are exactly the four mod-4 stripes; combine as
// ((s0+s1)+(s2+s3)) to match the reference.
inline double reduce_stripes(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const double s01 = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  const double s23 = _mm_cvtsd_f64(_mm_add_sd(hi, _mm_unpackhi_pd(hi, hi)));
  return s01 + s23;
}

double x_dot(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = reduce_stripes(acc);
  for (std::size_t i = n4; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void x_gemm_nt(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc) {
  constexpr std::size_t kRows = 8;
  const std::size_t k4 = k & ~std::size_t{3};
  for (std::size_t i0 = 0; i0 < m; i0 += kRows) {
    const std::size_t ir = m - i0 < kRows ? m - i0 : kRows;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * ldb;
      __m256d acc[kRows];
      for (std::size_t r = 0; r < ir; ++r) acc[r] = _mm256_setzero_pd();
      for (std::size_t kk = 0; kk < k4; kk += 4) {
        const __m256d bv = _mm256_loadu_pd(brow + kk);
        for (std::size_t r = 0; r < ir; ++r)
          acc[r] = _mm256_fmadd_pd(_mm256_loadu_pd(a + (i0 + r) * lda + kk),
                                   bv, acc[r]);
      }
      for (std::size_t r = 0; r < ir; ++r) {
        double s = reduce_stripes(acc[r]);
        const double* arow = a + (i0 + r) * lda;
        for (std::size_t kk = k4; kk < k; ++kk)
          s = std::fma(arow[kk], brow[kk], s);
        c[(i0 + r) * ldc + j] += s;
      }
    }
  }
}

double x_sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = reduce_stripes(acc);
  for (std::size_t i = n4; i < n; ++i) s += x[i];
  return s;
}

double x_sq_sum(const double* x, std::size_t n) { return x_dot(x, x, n); }

void x_axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (std::size_t i = n4; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void x_add(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(x + i),
                                   _mm256_loadu_pd(y + i)));
  for (std::size_t i = n4; i < n; ++i) out[i] = x[i] + y[i];
}

void x_sub(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(x + i),
                                   _mm256_loadu_pd(y + i)));
  for (std::size_t i = n4; i < n; ++i) out[i] = x[i] - y[i];
}

void x_mul(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                   _mm256_loadu_pd(y + i)));
  for (std::size_t i = n4; i < n; ++i) out[i] = x[i] * y[i];
}

void x_scale(const double* x, double a, double* out, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
  for (std::size_t i = n4; i < n; ++i) out[i] = x[i] * a;
}

// Compare-and-mask keeps -0.0 and NaN handling identical to the scalar
// x > 0 ? x : 0 form.
void x_relu(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(out + i,
                     _mm256_and_pd(v, _mm256_cmp_pd(v, zero, _CMP_GT_OQ)));
  }
  for (std::size_t i = n4; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

bool x_all_finite(const double* x, std::size_t n) {
  const __m256d abs_mask = _mm256_castsi256_pd(
      _mm256_set1_epi64x(0x7fffffffffffffffLL));
  const __m256d inf = _mm256_set1_pd(HUGE_VAL);
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d v = _mm256_and_pd(_mm256_loadu_pd(x + i), abs_mask);
    if (_mm256_movemask_pd(_mm256_cmp_pd(v, inf, _CMP_LT_OQ)) != 0xF)
      return false;
  }
  for (std::size_t i = n4; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

const Backend kAvx2 = {
    "avx2", x_gemm_nn, x_gemm_nt, x_dot,   x_sum,  x_sq_sum, x_axpy,
    x_add,  x_sub,     x_mul,     x_scale, x_relu, x_all_finite,
};

}  // namespace

const Backend* avx2_backend() { return &kAvx2; }

}  // namespace capsid::kernels

#endif
