#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace capsid::kernels {

// Arithmetic inner loops used by the tensor engine. Every backend must
// produce bit-identical results so that a checkpoint or report does not
// depend on which instruction set happened to be available:
//
//  * gemm_nn / gemm_tn-style per-element accumulation is a single fused
//    multiply-add chain over ascending k.
//  * dot / sum / sq_sum and every gemm_nt element accumulate in four
//    independent stripes (index mod 4), combined as ((s0+s1)+(s2+s3))
//    plus a sequential tail for n % 4 leftovers, FMA throughout.
//  * Elementwise kernels round once per element, no fusing across elements.
//
// The scalar backend is the reference; SIMD variants are equivalence-tested
// against it bit for bit.
struct Backend {
  const char* name;

  // C(MxN) += A(MxK) * B(KxN), row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc);
  // C(MxN) += A(MxK) * B(NxK)^T; every element is a dot of two rows.
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc);

  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*sq_sum)(const double* x, std::size_t n);

  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*sub)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  void (*scale)(const double* x, double a, double* out, std::size_t n);
  void (*relu)(const double* x, double* out, std::size_t n);
  bool (*all_finite)(const double* x, std::size_t n);
};

// Reference backend, always available.
const Backend& scalar();

// Currently selected backend. Picked once at first use: the fastest
// instruction set the CPU supports, unless CAPSID_KERNEL={scalar,avx2,neon}
// overrides the choice.
const Backend& active();

// Explicit selection, e.g. from tests. Throws ConfigError for a backend
// that is unknown or not usable on this CPU.
void select(std::string_view name);

// Backends usable on this machine, reference first.
std::vector<const Backend*> available();

// Out-of-place transpose: in is r x c row-major, out is c x r.
void transpose(const double* in, std::size_t r, std::size_t c, double* out);

}  // namespace capsid::kernels
