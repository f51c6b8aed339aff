// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "simd/gemm.hpp"

namespace recolor::simd {
namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#endif
#if defined(__aarch64__)
    case Isa::neon:
      return true;
#endif
    default:
      return false;
  }
}

Isa pick_isa() {
  if (const char* env = std::getenv("RECOLOR_SIMD")) {
    if (!std::strcmp(env, "scalar")) return Isa::scalar;
    if (!std::strcmp(env, "avx2") && cpu_has(Isa::avx2)) return Isa::avx2;
    if (!std::strcmp(env, "neon") && cpu_has(Isa::neon)) return Isa::neon;
    // "auto" or an unavailable request falls through to detection.
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has(Isa::avx2)) return Isa::avx2;
#endif
#if defined(__aarch64__)
  if (cpu_has(Isa::neon)) return Isa::neon;
#endif
  return Isa::scalar;
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "?";
}

Isa active_isa() {
  static const Isa isa = pick_isa();
  return isa;
}

void available_isas(Isa* out, int* count) {
  int n = 0;
  out[n++] = Isa::scalar;
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has(Isa::avx2)) out[n++] = Isa::avx2;
#endif
#if defined(__aarch64__)
  if (cpu_has(Isa::neon)) out[n++] = Isa::neon;
#endif
  *count = n;
}

void sgemm_isa(Isa isa, bool trans_a, bool trans_b, int m, int n, int k,
               float alpha, const float* a, int lda, const float* b, int ldb,
               float beta, float* c, int ldc) {
  switch (isa) {
    case Isa::scalar:
      detail::sgemm_scalar(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb,
                           beta, c, ldc);
      return;
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2:
      detail::sgemm_avx2(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb,
                         beta, c, ldc);
      return;
#endif
#if defined(__aarch64__)
    case Isa::neon:
      detail::sgemm_neon(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb,
                         beta, c, ldc);
      return;
#endif
    default:
      throw std::runtime_error("requested SIMD ISA is not available");
  }
}

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc) {
  sgemm_isa(active_isa(), trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb,
            beta, c, ldc);
}

}  // namespace recolor::simd
