// SPDX-License-Identifier: Apache-2.0
//
// AVX2+FMA GEMM. Classic three-level blocking:
//   NC x KC panel of B packed into L3-friendly NR-wide slivers,
//   MC x KC panel of A packed into MR-wide slivers (L2 resident),
//   6x16 register microkernel (12 ymm accumulators) over KC.
// Tile sizes: MR=6, NR=16, MC=96, KC=256, NC=2048.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "simd/gemm.hpp"

namespace recolor::simd::detail {
namespace {

constexpr int MR = 6;
constexpr int NR = 16;
constexpr int MC = 96;
constexpr int KC = 256;
constexpr int NC = 2048;

inline float at(const float* x, int ld, bool trans, int row, int col) {
  return trans ? x[static_cast<int64_t>(col) * ld + row]
               : x[static_cast<int64_t>(row) * ld + col];
}

// A sliver layout: k-major groups of MR row values (zero padded past mc).
void pack_a(const float* a, int lda, bool trans, int i0, int mc, int p0,
            int kc, float* out) {
  for (int ir = 0; ir < mc; ir += MR) {
    const int mr = std::min(MR, mc - ir);
    for (int p = 0; p < kc; ++p) {
      for (int r = 0; r < MR; ++r)
        *out++ = r < mr ? at(a, lda, trans, i0 + ir + r, p0 + p) : 0.0f;
    }
  }
}

// B sliver layout: k-major groups of NR column values (zero padded past nc).
void pack_b(const float* b, int ldb, bool trans, int p0, int kc, int j0,
            int nc, float* out) {
  for (int jr = 0; jr < nc; jr += NR) {
    const int nr = std::min(NR, nc - jr);
    if (!trans && nr == NR) {
      for (int p = 0; p < kc; ++p) {
        std::memcpy(out, b + static_cast<int64_t>(p0 + p) * ldb + j0 + jr,
                    NR * sizeof(float));
        out += NR;
      }
    } else {
      for (int p = 0; p < kc; ++p)
        for (int cidx = 0; cidx < NR; ++cidx)
          *out++ = cidx < nr ? at(b, ldb, trans, p0 + p, j0 + jr + cidx) : 0.0f;
    }
  }
}

// C tile (mr x nr, mr<=6, nr<=16) += alpha * packed_a . packed_b.
void kernel_6x16(int kc, const float* ap, const float* bp, float alpha,
                 float* c, int ldc, int mr, int nr) {
  __m256 acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    bp += NR;
    for (int r = 0; r < MR; ++r) {
      const __m256 av = _mm256_broadcast_ss(ap + r);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
    ap += MR;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  if (mr == MR && nr == NR) {
    for (int r = 0; r < MR; ++r) {
      float* crow = c + static_cast<int64_t>(r) * ldc;
      _mm256_storeu_ps(crow, _mm256_fmadd_ps(va, acc[r][0],
                                             _mm256_loadu_ps(crow)));
      _mm256_storeu_ps(crow + 8, _mm256_fmadd_ps(va, acc[r][1],
                                                 _mm256_loadu_ps(crow + 8)));
    }
  } else {
    alignas(32) float tmp[MR][NR];
    for (int r = 0; r < MR; ++r) {
      _mm256_store_ps(tmp[r], acc[r][0]);
      _mm256_store_ps(tmp[r] + 8, acc[r][1]);
    }
    for (int r = 0; r < mr; ++r)
      for (int cidx = 0; cidx < nr; ++cidx)
        c[static_cast<int64_t>(r) * ldc + cidx] += alpha * tmp[r][cidx];
  }
}

}  // namespace

void sgemm_avx2(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
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
            kernel_6x16(kc, ap, bp, alpha,
                        c + static_cast<int64_t>(i0 + ir) * ldc + j0 + jr, ldc,
                        mr, nr);
          }
        }
      }
    }
  }
}

}  // namespace recolor::simd::detail

#endif  // x86_64
