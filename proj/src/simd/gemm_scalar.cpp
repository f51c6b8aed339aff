// SPDX-License-Identifier: Apache-2.0
//
// Portable GEMM kernels. The single-precision path uses a modest k-blocked
// loop with four accumulators so machines without vector units are not
// hopeless; it is still the baseline the vector kernels are tested against.

#include "simd/gemm.hpp"

#include <algorithm>
#include <vector>

namespace recolor::simd {
namespace {

template <typename T>
inline T load(const T* x, int ld, bool trans, int row, int col) {
  return trans ? x[static_cast<int64_t>(col) * ld + row]
               : x[static_cast<int64_t>(row) * ld + col];
}

template <typename T>
void gemm_generic(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
                  const T* a, int lda, const T* b, int ldb, T beta, T* c,
                  int ldc) {
  // Pack op(B) row-block by row-block so the inner loop walks contiguously.
  constexpr int kc_max = 256;
  std::vector<T> bpanel;
  for (int p0 = 0; p0 < k; p0 += kc_max) {
    const int kc = std::min(kc_max, k - p0);
    bpanel.assign(static_cast<size_t>(kc) * n, T(0));
    for (int p = 0; p < kc; ++p)
      for (int j = 0; j < n; ++j)
        bpanel[static_cast<size_t>(p) * n + j] =
            load(b, ldb, trans_b, p0 + p, j);
    for (int i = 0; i < m; ++i) {
      T* crow = c + static_cast<int64_t>(i) * ldc;
      if (p0 == 0) {
        if (beta == T(0)) {
          for (int j = 0; j < n; ++j) crow[j] = T(0);
        } else if (beta != T(1)) {
          for (int j = 0; j < n; ++j) crow[j] *= beta;
        }
      }
      int p = 0;
      for (; p + 4 <= kc; p += 4) {
        const T a0 = alpha * load(a, lda, trans_a, i, p0 + p);
        const T a1 = alpha * load(a, lda, trans_a, i, p0 + p + 1);
        const T a2 = alpha * load(a, lda, trans_a, i, p0 + p + 2);
        const T a3 = alpha * load(a, lda, trans_a, i, p0 + p + 3);
        const T* b0 = bpanel.data() + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j)
          crow[j] += a0 * b0[j] + a1 * b0[n + j] + a2 * b0[2 * n + j] +
                     a3 * b0[3 * n + j];
      }
      for (; p < kc; ++p) {
        const T av = alpha * load(a, lda, trans_a, i, p0 + p);
        const T* brow = bpanel.data() + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace

namespace detail {
void sgemm_scalar(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                  const float* a, int lda, const float* b, int ldb, float beta,
                  float* c, int ldc) {
  gemm_generic(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
}  // namespace detail

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
           const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc) {
  gemm_generic(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace recolor::simd
