// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "recolor/rng.hpp"
#include "simd/gemm.hpp"

using recolor::Rng;
namespace simd = recolor::simd;

namespace {

std::vector<float> random_matrix(int rows, int cols, Rng& rng) {
  std::vector<float> m(static_cast<size_t>(rows) * cols);
  for (auto& v : m) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return m;
}

// Plain triple loop straight from the definition.
void gemm_naive(bool ta, bool tb, int m, int n, int k, float alpha,
                const float* a, int lda, const float* b, int ldb, float beta,
                float* c, int ldc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const float av = ta ? a[static_cast<int64_t>(p) * lda + i]
                            : a[static_cast<int64_t>(i) * lda + p];
        const float bv = tb ? b[static_cast<int64_t>(j) * ldb + p]
                            : b[static_cast<int64_t>(p) * ldb + j];
        acc += static_cast<double>(av) * bv;
      }
      float& out = c[static_cast<int64_t>(i) * ldc + j];
      out = alpha * static_cast<float>(acc) + beta * out;
    }
}

}  // namespace

TEST_CASE("every available ISA matches the naive definition") {
  simd::Isa isas[3];
  int count = 0;
  simd::available_isas(isas, &count);
  REQUIRE(count >= 1);

  Rng rng(42);
  const struct {
    int m, n, k;
    bool ta, tb;
    float alpha, beta;
  } cases[] = {
      {1, 1, 1, false, false, 1.0f, 0.0f},
      {5, 7, 3, false, false, 1.0f, 0.0f},
      {17, 13, 9, false, true, 2.0f, 0.0f},
      {13, 17, 9, true, false, 1.0f, 1.0f},
      {8, 8, 8, true, true, -1.5f, 0.5f},
      {33, 47, 65, false, true, 1.0f, 0.0f},
      {96, 130, 70, false, false, 1.0f, 0.0f},
      {130, 96, 257, false, true, 1.0f, 0.0f},
  };
  for (const auto& tc : cases) {
    const int ar = tc.ta ? tc.k : tc.m, ac = tc.ta ? tc.m : tc.k;
    const int br = tc.tb ? tc.n : tc.k, bc = tc.tb ? tc.k : tc.n;
    const auto a = random_matrix(ar, ac, rng);
    const auto b = random_matrix(br, bc, rng);
    const auto c0 = random_matrix(tc.m, tc.n, rng);

    std::vector<float> expect = c0;
    gemm_naive(tc.ta, tc.tb, tc.m, tc.n, tc.k, tc.alpha, a.data(), ac,
               b.data(), bc, tc.beta, expect.data(), tc.n);

    for (int i = 0; i < count; ++i) {
      std::vector<float> got = c0;
      simd::sgemm_isa(isas[i], tc.ta, tc.tb, tc.m, tc.n, tc.k, tc.alpha,
                      a.data(), ac, b.data(), bc, tc.beta, got.data(), tc.n);
      double max_err = 0.0;
      for (size_t j = 0; j < got.size(); ++j)
        max_err = std::max(max_err,
                           std::abs(static_cast<double>(got[j]) - expect[j]));
      INFO("isa=", simd::isa_name(isas[i]), " m=", tc.m, " n=", tc.n,
           " k=", tc.k);
      CHECK(max_err < 2e-4 * std::max(1, tc.k));
    }
  }
}

TEST_CASE("dgemm matches the naive definition") {
  Rng rng(7);
  const int m = 9, n = 11, k = 13;
  std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n),
      c(static_cast<size_t>(m) * n, 0.0), expect(c);
  for (auto& v : a) v = rng.uniform(-1.0, 1.0);
  for (auto& v : b) v = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      expect[i * n + j] = acc;
    }
  simd::dgemm(false, false, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0,
              c.data(), n);
  for (size_t i = 0; i < c.size(); ++i)
    CHECK(std::abs(c[i] - expect[i]) < 1e-12);
}

TEST_CASE("active ISA is reported") {
  const simd::Isa isa = simd::active_isa();
  CHECK(simd::isa_name(isa) != nullptr);
}
