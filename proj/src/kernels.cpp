#include "capsid/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>

#include "capsid/errors.hpp"

namespace capsid::kernels {

namespace {

void s_gemm_nn(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    double* crow = c + i * ldc;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + kk * ldb;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] = std::fma(av, brow[j], crow[j]);
    }
  }
}

double s_dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    s0 = std::fma(x[i], y[i], s0);
    s1 = std::fma(x[i + 1], y[i + 1], s1);
    s2 = std::fma(x[i + 2], y[i + 2], s2);
    s3 = std::fma(x[i + 3], y[i + 3], s3);
  }
  double acc = (s0 + s1) + (s2 + s3);
  for (std::size_t i = n4; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

void s_gemm_nt(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * ldc + j] += s_dot(a + i * lda, b + j * ldb, k);
}

double s_sum(const double* x, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    s0 += x[i];
    s1 += x[i + 1];
    s2 += x[i + 2];
    s3 += x[i + 3];
  }
  double acc = (s0 + s1) + (s2 + s3);
  for (std::size_t i = n4; i < n; ++i) acc += x[i];
  return acc;
}

double s_sq_sum(const double* x, std::size_t n) { return s_dot(x, x, n); }

void s_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void s_add(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void s_sub(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void s_mul(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void s_scale(const double* x, double a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * a;
}

void s_relu(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

bool s_all_finite(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

const Backend kScalar = {
    "scalar", s_gemm_nn, s_gemm_nt, s_dot,   s_sum,   s_sq_sum, s_axpy,
    s_add,    s_sub,     s_mul,     s_scale, s_relu,  s_all_finite,
};

std::atomic<const Backend*> g_active{nullptr};
std::once_flag g_init_once;

}  // namespace

#if defined(__x86_64__) || defined(_M_X64)
const Backend* avx2_backend();
static bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif
#if defined(__aarch64__)
const Backend* neon_backend();
#endif

const Backend& scalar() { return kScalar; }

std::vector<const Backend*> available() {
  std::vector<const Backend*> out{&kScalar};
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) out.push_back(avx2_backend());
#endif
#if defined(__aarch64__)
  out.push_back(neon_backend());
#endif
  return out;
}

void select(std::string_view name) {
  for (const Backend* bk : available()) {
    if (name == bk->name) {
      g_active.store(bk, std::memory_order_release);
      return;
    }
  }
  throw ConfigError("kernel backend '" + std::string(name) +
                    "' is unknown or unsupported on this cpu");
}

const Backend& active() {
  std::call_once(g_init_once, [] {
    if (g_active.load(std::memory_order_acquire) != nullptr) return;
    if (const char* env = std::getenv("CAPSID_KERNEL"); env && *env) {
      select(env);
      return;
    }
    g_active.store(available().back(), std::memory_order_release);
  });
  return *g_active.load(std::memory_order_acquire);
}

void transpose(const double* in, std::size_t r, std::size_t c, double* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t ib = 0; ib < r; ib += kBlock) {
    const std::size_t ie = ib + kBlock < r ? ib + kBlock : r;
    for (std::size_t jb = 0; jb < c; jb += kBlock) {
      const std::size_t je = jb + kBlock < c ? jb + kBlock : c;
      for (std::size_t i = ib; i < ie; ++i)
        for (std::size_t j = jb; j < je; ++j) out[j * r + i] = in[i * c + j];
    }
  }
}

}  // namespace capsid::kernels
