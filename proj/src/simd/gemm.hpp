// SPDX-License-Identifier: Apache-2.0
//
// Single-precision GEMM with runtime ISA dispatch. One kernel serves the
// correlation matrix, im2col convolutions and the attention products; the
// scalar build is the portable fallback and the equivalence baseline for
// the vectorized variants.
#pragma once

#include <cstdint>

namespace recolor::simd {

enum class Isa { scalar, avx2, neon };

const char* isa_name(Isa isa);

// ISA picked at startup: best supported one, overridable with
// RECOLOR_SIMD={scalar,avx2,neon,auto} for tests and debugging.
Isa active_isa();

// Every ISA compiled into this binary and supported by the CPU.
void available_isas(Isa* out, int* count);  // out must hold >= 3

// C (m x n, row-major, leading dim ldc) = alpha * op(A) op(B) + beta * C.
// op(X) = X or X^T per the trans flags; A is m x k after op, B is k x n.
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc);

// Force a specific ISA (must be available); used by equivalence tests.
void sgemm_isa(Isa isa, bool trans_a, bool trans_b, int m, int n, int k,
               float alpha, const float* a, int lda, const float* b, int ldb,
               float beta, float* c, int ldc);

// Double-precision variant, scalar only. The gradient-check suite runs the
// whole stack in double; it never needs to be fast.
void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
           const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc);

namespace detail {
void sgemm_scalar(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                  const float* a, int lda, const float* b, int ldb, float beta,
                  float* c, int ldc);
#if defined(__x86_64__) || defined(_M_X64)
void sgemm_avx2(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                const float* a, int lda, const float* b, int ldb, float beta,
                float* c, int ldc);
#endif
#if defined(__aarch64__)
void sgemm_neon(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                const float* a, int lda, const float* b, int ldb, float beta,
                float* c, int ldc);
#endif
}  // namespace detail

}  // namespace recolor::simd
