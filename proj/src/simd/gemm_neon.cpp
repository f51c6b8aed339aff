// SPDX-License-Identifier: Apache-2.0
//
// NEON GEMM variant (aarch64). Same panel scheme as the AVX2 kernel with an
// 8x8 microkernel of float32x4 accumulators.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "simd/gemm.hpp"

namespace recolor::simd::detail {
namespace {

constexpr int MR = 8;
constexpr int NR = 8;
constexpr int MC = 128;
constexpr int KC = 256;
constexpr int NC = 2048;

inline float at(const float* x, int ld, bool trans, int row, int col) {
  return trans ? x[static_cast<int64_t>(col) * ld + row]
               : x[static_cast<int64_t>(row) * ld + col];
}

void pack_a(const float* a, int lda, bool trans, int i0, int mc, int p0,
            int kc, float* out) {
  for (int ir = 0; ir < mc; ir += MR) {
    const int mr = std::min(MR, mc - ir);
    for (int p = 0; p < kc; ++p)
      for (int r = 0; r < MR; ++r)
        *out++ = r < mr ? at(a, lda, trans, i0 + ir + r, p0 + p) : 0.0f;
  }
}

void pack_b(const float* b, int ldb, bool trans, int p0, int kc, int j0,
            int nc, float* out) {
  for (int jr = 0; jr < nc; jr += NR) {
    const int nr = std::min(NR, nc - jr);
    for (int p = 0; p < kc; ++p)
      for (int c = 0; c < NR; ++c)
        *out++ = c < nr ? at(b, ldb, trans, p0 + p, j0 + jr + c) : 0.0f;
  }
}

void kernel_8x8(int kc, const float* ap, const float* bp, float alpha,
                float* c, int ldc, int mr, int nr) {
  float32x4_t acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = vdupq_n_f32(0.0f);
    acc[r][1] = vdupq_n_f32(0.0f);
  }
  for (int p = 0; p < kc; ++p) {
    const float32x4_t b0 = vld1q_f32(bp);
    const float32x4_t b1 = vld1q_f32(bp + 4);
    bp += NR;
    for (int r = 0; r < MR; ++r) {
      const float32x4_t av = vdupq_n_f32(ap[r]);
      acc[r][0] = vfmaq_f32(acc[r][0], av, b0);
      acc[r][1] = vfmaq_f32(acc[r][1], av, b1);
    }
    ap += MR;
  }
  float tmp[MR][NR];
  for (int r = 0; r < MR; ++r) {
    vst1q_f32(tmp[r], acc[r][0]);
    vst1q_f32(tmp[r] + 4, acc[r][1]);
  }
  for (int r = 0; r < mr; ++r)
    for (int cc = 0; cc < nr; ++cc)
      c[static_cast<int64_t>(r) * ldc + cc] += alpha * tmp[r][cc];
}

}  // namespace

void sgemm_neon(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                const float* a, int lda, const float* b, int ldb, float beta,
                float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<int64_t>(i) * ldc;
    if (beta == 0.0f) {
      std::memset(crow, 0, static_cast<size_t>(n) * sizeof(float));
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (k <= 0 || alpha == 0.0f) return;

  std::vector<float> apanel(static_cast<size_t>(MC + MR) * KC);
  std::vector<float> bpanel(static_cast<size_t>(KC) * (NC + NR));
  for (int j0 = 0; j0 < n; j0 += NC) {
    const int nc = std::min(NC, n - j0);
    for (int p0 = 0; p0 < k; p0 += KC) {
      const int kc = std::min(KC, k - p0);
      pack_b(b, ldb, trans_b, p0, kc, j0, nc, bpanel.data());
      for (int i0 = 0; i0 < m; i0 += MC) {
        const int mc = std::min(MC, m - i0);
        pack_a(a, lda, trans_a, i0, mc, p0, kc, apanel.data());
        for (int jr = 0; jr < nc; jr += NR) {
          const int nr = std::min(NR, nc - jr);
          const float* bp = bpanel.data() + static_cast<size_t>(jr / NR) * kc * NR;
          for (int ir = 0; ir < mc; ir += MR) {
            const int mr = std::min(MR, mc - ir);
            const float* ap =
                apanel.data() + static_cast<size_t>(ir / MR) * kc * MR;
            kernel_8x8(kc, ap, bp, alpha,
                       c + static_cast<int64_t>(i0 + ir) * ldc + j0 + jr, ldc,
                       mr, nr);
          }
        }
      }
    }
  }
}

}  // namespace recolor::simd::detail

#endif  // aarch64
