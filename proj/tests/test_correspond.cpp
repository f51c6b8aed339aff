// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "recolor/correspond.hpp"
#include "testutil.hpp"

using namespace recolor;
using testutil::random_array;

namespace {

nn::Var leaf(const Array<float>& a) { return nn::Var::leaf(a, false); }

Array<float> random_grid(int n, int c, uint64_t seed) {
  Rng rng(seed);
  return random_array<float>({n, c}, rng, -1.0f, 1.0f);
}

double max_abs(const Array<float>& a, const Array<float>& b) {
  return testutil::max_abs_diff(a, b);
}

}  // namespace

TEST_CASE("fuse: 64x64 input gives a 16x16 grid with shared weights") {
  Backbone<float> backbone(BackboneConfig::toy(), 1);
  CorrespondNet net(backbone.config(), 16, 2);
  Rng rng(3);
  const Array<float> img = random_array<float>({3, 64, 64}, rng, 0.0f, 1.0f);
  const FeaturePyramid<float> pyr = backbone.extract(img);

  const CorrespondNet::Grid g1 = net.fuse(pyr);
  CHECK(g1.h == 16);
  CHECK(g1.w == 16);
  CHECK(g1.rows.value().dim(0) == 256);
  CHECK(g1.rows.value().dim(1) == 16);

  // determinism
  const CorrespondNet::Grid g2 = net.fuse(pyr);
  CHECK(std::memcmp(g1.rows.value().data(), g2.rows.value().data(),
                    sizeof(float) *
                        static_cast<size_t>(g1.rows.value().size())) == 0);

  // weight sharing: the same pyramid on the "reference side" is the same call
  const FeaturePyramid<float> pyr_again = backbone.extract(img);
  const CorrespondNet::Grid g3 = net.fuse(pyr_again);
  CHECK(max_abs(g1.rows.value(), g3.rows.value()) == 0.0);
}

TEST_CASE("fuse: odd input sizes land on the level-3 grid") {
  Backbone<float> backbone(BackboneConfig::toy(), 1);
  CorrespondNet net(backbone.config(), 16, 2);
  const FeaturePyramid<float> pyr =
      backbone.extract(Array<float>::full({3, 108, 192}, 0.5f));
  const CorrespondNet::Grid g = net.fuse(pyr);
  CHECK(g.h == 27);
  CHECK(g.w == 48);
}

TEST_CASE("correlate: self-similarity diagonal is 1") {
  const Array<float> fx = random_grid(10, 8, 4);
  const Array<float> m = correlate(leaf(fx), leaf(fx)).value();
  for (int i = 0; i < 10; ++i)
    CHECK(m[static_cast<int64_t>(i) * 10 + i] ==
          doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("correlate: centered-orthogonal row gives zeros") {
  // fy rows live in coordinates 2..7; fx row 0 deviates from the fx mean only
  // in coordinates 0..1, so after centering it is orthogonal to every
  // centered fy row.
  Array<float> fx = Array<float>::zeros({2, 8});
  fx[0] = 1.0f;   // row 0: e0 + e1
  fx[1] = 1.0f;
  fx[8] = -1.0f;  // row 1: -e0 - e1 (mean is zero)
  fx[9] = -1.0f;
  Rng rng(5);
  Array<float> fy = Array<float>::zeros({6, 8});
  for (int i = 0; i < 6; ++i)
    for (int c = 2; c < 8; ++c)
      fy[static_cast<int64_t>(i) * 8 + c] =
          static_cast<float>(rng.uniform(-1.0, 1.0));
  const Array<float> m = correlate(leaf(fx), leaf(fy)).value();
  for (int j = 0; j < 6; ++j) CHECK(std::abs(m[j]) < 1e-5);
}

TEST_CASE("correlate: zero-variance row yields exact zeros") {
  Array<float> fx = random_grid(4, 6, 6);
  Array<float> fy = random_grid(4, 6, 7);
  // make fx row 2 equal to the mean of the other rows' pattern: all rows
  // identical => centered rows are zero
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 6; ++c) fx[static_cast<int64_t>(i) * 6 + c] = 0.25f;
  const Array<float> m = correlate(leaf(fx), leaf(fy)).value();
  for (int64_t i = 0; i < m.size(); ++i) CHECK(m[i] == 0.0f);
}

TEST_CASE("correlate matches the scalar double-loop oracle") {
  const Array<float> fx = random_grid(36, 8, 8);
  const Array<float> fy = random_grid(36, 8, 9);
  const Array<float> fast = correlate(leaf(fx), leaf(fy)).value();
  const Array<float> oracle = correlate_reference(fx, fy);
  CHECK(max_abs(fast, oracle) < 1e-5);
  // entries live in [-1,1]
  for (int64_t i = 0; i < fast.size(); ++i) {
    CHECK(fast[i] <= 1.0f + 1e-5f);
    CHECK(fast[i] >= -1.0f - 1e-5f);
  }
}

TEST_CASE("correlate transpose symmetry") {
  const Array<float> fx = random_grid(12, 8, 10);
  const Array<float> fy = random_grid(9, 8, 11);
  const Array<float> m1 = correlate(leaf(fx), leaf(fy)).value();
  const Array<float> m2 = correlate(leaf(fy), leaf(fx)).value();
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 9; ++j)
      CHECK(std::abs(m1[static_cast<int64_t>(i) * 9 + j] -
                     m2[static_cast<int64_t>(j) * 12 + i]) < 1e-6);
}

TEST_CASE("correlate invariant to a positive rescale of centered rows") {
  const Array<float> fy = random_grid(10, 6, 12);
  // fy2 = mean + s * (fy - mean): centered rows scale by s > 0
  Array<float> mean({6});
  for (int i = 0; i < 10; ++i)
    for (int c = 0; c < 6; ++c) mean[c] += fy[static_cast<int64_t>(i) * 6 + c];
  for (int c = 0; c < 6; ++c) mean[c] /= 10.0f;
  const float s = 3.7f;
  Array<float> fy2({10, 6});
  for (int i = 0; i < 10; ++i)
    for (int c = 0; c < 6; ++c)
      fy2[static_cast<int64_t>(i) * 6 + c] =
          mean[c] + s * (fy[static_cast<int64_t>(i) * 6 + c] - mean[c]);
  const Array<float> fx = random_grid(7, 6, 13);
  const Array<float> m1 = correlate(leaf(fx), leaf(fy)).value();
  const Array<float> m2 = correlate(leaf(fx), leaf(fy2)).value();
  CHECK(max_abs(m1, m2) < 1e-6);
}

TEST_CASE("warp_colors: one-hot row selects the reference color") {
  const int n = 5, m = 5;
  Array<float> mat = Array<float>::full({n, m}, -1.0f);
  for (int i = 0; i < n; ++i) mat[static_cast<int64_t>(i) * m + (i + 1) % m] = 1.0f;
  const Array<float> ref = random_grid(m, 2, 14);
  const Array<float> warped =
      warp_colors(leaf(mat), leaf(ref), 0.01f).value();
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % m;
    CHECK(std::abs(warped[static_cast<int64_t>(i) * 2] -
                   ref[static_cast<int64_t>(j) * 2]) < 1e-6);
    CHECK(std::abs(warped[static_cast<int64_t>(i) * 2 + 1] -
                   ref[static_cast<int64_t>(j) * 2 + 1]) < 1e-6);
  }
}

TEST_CASE("warp_colors: constant row averages the reference") {
  const int m = 7;
  const Array<float> mat = Array<float>::full({1, m}, 0.3f);
  const Array<float> ref = random_grid(m, 2, 15);
  const Array<float> warped = warp_colors(leaf(mat), leaf(ref), 0.01f).value();
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += ref[static_cast<int64_t>(j) * 2 + c];
    mean /= m;
    CHECK(std::abs(warped[c] - mean) < 1e-6);
  }
}

TEST_CASE("warp_colors approaches argmax selection at small tau") {
  // Correlation matrices of matchable features: fy is a shuffled, noised
  // copy of fx, so every row has one sharp peak. Rows with top-1 margin
  // >= 0.05 must select the argmax color to 1e-3.
  Rng rng(16);
  const int n = 36, c_dim = 16;
  int rows_checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Array<float> fx = random_grid(n, c_dim, 170 + trial);
    Array<float> fy({n, c_dim});
    for (int i = 0; i < n; ++i) {
      const int src = (i * 7 + 3) % n;  // fixed permutation
      for (int c = 0; c < c_dim; ++c)
        fy[static_cast<int64_t>(i) * c_dim + c] =
            fx[static_cast<int64_t>(src) * c_dim + c] +
            0.15f * static_cast<float>(rng.normal());
    }
    const Array<float> mat = correlate(leaf(fx), leaf(fy)).value();
    const Array<float> ref = random_grid(n, 2, 200 + trial);
    const Array<float> warped =
        warp_colors(leaf(mat), leaf(ref), 0.01f).value();
    for (int i = 0; i < n; ++i) {
      const float* row = mat.data() + static_cast<int64_t>(i) * n;
      int best = 0;
      for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
      float second = -2.0f;
      for (int j = 0; j < n; ++j)
        if (j != best) second = std::max(second, row[j]);
      if (row[best] - second < 0.05f) continue;
      ++rows_checked;
      for (int c = 0; c < 2; ++c)
        CHECK(std::abs(warped[static_cast<int64_t>(i) * 2 + c] -
                       ref[static_cast<int64_t>(best) * 2 + c]) < 1e-3);
    }
  }
  CHECK(rows_checked > 300);
}

TEST_CASE("warp_colors error bound for arbitrary bounded rows") {
  // For entries in [-1,1] the non-argmax softmax mass is at most
  // (m-1) e^(-margin/tau); the warp error is that mass times the color range.
  Rng rng(161);
  const int n = 36, m = 36;
  const Array<float> ref = random_grid(m, 2, 171);
  Array<float> mat({n, m});
  for (int64_t i = 0; i < mat.size(); ++i)
    mat[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  const Array<float> warped = warp_colors(leaf(mat), leaf(ref), 0.01f).value();
  for (int i = 0; i < n; ++i) {
    const float* row = mat.data() + static_cast<int64_t>(i) * m;
    int best = 0;
    for (int j = 1; j < m; ++j)
      if (row[j] > row[best]) best = j;
    float second = -2.0f;
    for (int j = 0; j < m; ++j)
      if (j != best) second = std::max(second, row[j]);
    const double margin = row[best] - second;
    const double bound = (m - 1) * std::exp(-margin / 0.01) * 2.0 + 1e-6;
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(warped[static_cast<int64_t>(i) * 2 + c] -
                     ref[static_cast<int64_t>(best) * 2 + c]) <= bound);
  }
}

TEST_CASE("warp_colors: tau sweep converges monotonically to argmax") {
  Rng rng(18);
  const int n = 16, m = 24;
  const Array<float> ref = random_grid(m, 2, 19);
  Array<float> mat({n, m});
  for (int64_t i = 0; i < mat.size(); ++i)
    mat[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  auto distance_to_argmax = [&](float tau) {
    const Array<float> warped = warp_colors(leaf(mat), leaf(ref), tau).value();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* row = mat.data() + static_cast<int64_t>(i) * m;
      int best = 0;
      for (int j = 1; j < m; ++j)
        if (row[j] > row[best]) best = j;
      for (int c = 0; c < 2; ++c)
        total += std::abs(warped[static_cast<int64_t>(i) * 2 + c] -
                          ref[static_cast<int64_t>(best) * 2 + c]);
    }
    return total;
  };
  const double d1 = distance_to_argmax(0.1f);
  const double d2 = distance_to_argmax(0.01f);
  const double d3 = distance_to_argmax(0.001f);
  CHECK(d2 <= d1 + 1e-9);
  CHECK(d3 <= d2 + 1e-9);
}

TEST_CASE("warp_colors: softmax rows sum to one and warp stays in bounds") {
  Rng rng(20);
  const int n = 12, m = 18;
  Array<float> mat({n, m});
  for (int64_t i = 0; i < mat.size(); ++i)
    mat[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  const Array<float> rows =
      ops::softmax_rows(leaf(mat), 0.01f).value();
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += rows[static_cast<int64_t>(i) * m + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  const Array<float> ref = random_grid(m, 2, 21);
  const Array<float> warped = warp_colors(leaf(mat), leaf(ref), 0.01f).value();
  for (int c = 0; c < 2; ++c) {
    float lo = 2.0f, hi = -2.0f;
    for (int j = 0; j < m; ++j) {
      lo = std::min(lo, ref[static_cast<int64_t>(j) * 2 + c]);
      hi = std::max(hi, ref[static_cast<int64_t>(j) * 2 + c]);
    }
    for (int i = 0; i < n; ++i) {
      CHECK(warped[static_cast<int64_t>(i) * 2 + c] >= lo - 1e-6f);
      CHECK(warped[static_cast<int64_t>(i) * 2 + c] <= hi + 1e-6f);
    }
  }
}

TEST_CASE("confidence: row max against the brute-force oracle") {
  const Array<float> fx = random_grid(9, 7, 22);
  const Array<float> m = correlate(leaf(fx), leaf(fx)).value();
  const Array<float> conf = confidence_map(leaf(m)).value();
  for (int i = 0; i < 9; ++i)
    CHECK(conf[i] == doctest::Approx(1.0).epsilon(1e-5));

  const Array<float> rnd = random_grid(6, 11, 23);
  const Array<float> conf2 = confidence_map(leaf(rnd)).value();
  for (int i = 0; i < 6; ++i) {
    float best = rnd[static_cast<int64_t>(i) * 11];
    for (int j = 1; j < 11; ++j)
      best = std::max(best, rnd[static_cast<int64_t>(i) * 11 + j]);
    CHECK(conf2[i] == best);
  }

  const Array<float> zeros = Array<float>::zeros({4, 5});
  const Array<float> conf3 = confidence_map(leaf(zeros)).value();
  for (int i = 0; i < 4; ++i) CHECK(conf3[i] == 0.0f);
}

namespace {

LabFrame colorful_frame(int h, int w, uint64_t seed) {
  Rng rng(seed);
  LabFrame f;
  f.l = Array<float>({h, w});
  f.ab = Array<float>({2, h, w});
  for (int64_t i = 0; i < f.l.size(); ++i)
    f.l[i] = static_cast<float>(rng.uniform(0.1, 0.9));
  for (int64_t i = 0; i < f.ab.size(); ++i)
    f.ab[i] = static_cast<float>(rng.uniform(-0.4, 0.4));
  return f;
}

}  // namespace

TEST_CASE("align_reference: self-reference gives full confidence") {
  Backbone<float> backbone(BackboneConfig::toy(), 1);
  CorrespondNet net(backbone.config(), 16, 2);
  const LabFrame y = colorful_frame(64, 64, 30);
  LabFrame x;  // same luminance, no color
  x.l = y.l.clone();
  x.ab = Array<float>::zeros({2, 64, 64});

  AlignOptions opts;
  opts.ref_features_from_color = false;  // luminance switch: pyramids match
  opts.identity_resblocks = true;
  const WarpResult res = align_reference(backbone, net, x, y, opts);

  double mean_conf = 0.0;
  for (int64_t i = 0; i < res.confidence.size(); ++i)
    mean_conf += res.confidence[i];
  mean_conf /= static_cast<double>(res.confidence.size());
  CHECK(mean_conf >= 0.99);

  const Array<float> expect = area_downsample(y.ab, res.h, res.w);
  double mse = 0.0;
  for (int64_t i = 0; i < expect.size(); ++i) {
    const double d = static_cast<double>(expect[i]) - res.warped_ab[i];
    mse += d * d;
  }
  mse /= static_cast<double>(expect.size());
  const double psnr = 10.0 * std::log10(4.0 / std::max(mse, 1e-12));
  CHECK(psnr >= 35.0);  // peak-to-peak 2 on the ab scale
}

TEST_CASE("align_reference: permuted blocks are recovered at interiors") {
  Backbone<float> backbone(BackboneConfig::toy(), 1);
  CorrespondNet net(backbone.config(), 16, 2);
  const int hw = 64;
  LabFrame orig = colorful_frame(hw, hw, 31);
  // Make the halves globally distinguishable (bright left, dark right) so
  // coarse levels agree with the fine-level matching.
  for (int y = 0; y < hw; ++y)
    for (int x = 0; x < hw; ++x)
      orig.l[static_cast<int64_t>(y) * hw + x] =
          (x < 32 ? 0.65f : 0.15f) +
          0.25f * orig.l[static_cast<int64_t>(y) * hw + x];
  // reference: swap the left and right 32x64 halves
  LabFrame permuted;
  permuted.l = Array<float>({hw, hw});
  permuted.ab = Array<float>({2, hw, hw});
  for (int y = 0; y < hw; ++y)
    for (int x = 0; x < hw; ++x) {
      const int sx = (x + 32) % 64;
      permuted.l[static_cast<int64_t>(y) * hw + x] =
          orig.l[static_cast<int64_t>(y) * hw + sx];
      for (int c = 0; c < 2; ++c)
        permuted.ab.at(c, y, x) = orig.ab.at(c, y, sx);
    }
  LabFrame input;  // gray version of the original
  input.l = orig.l.clone();
  input.ab = Array<float>::zeros({2, hw, hw});

  AlignOptions opts;
  opts.ref_features_from_color = false;
  opts.identity_resblocks = true;
  const WarpResult res = align_reference(backbone, net, input, permuted, opts);

  const Array<float> expect = area_downsample(orig.ab, res.h, res.w);
  // interiors: stay 3 grid cells away from each half's seam and borders
  int checked = 0;
  double max_err = 0.0;
  for (int y = 3; y < res.h - 3; ++y)
    for (int x = 3; x < res.w - 3; ++x) {
      const int half = res.w / 2;
      if (std::abs(x - half) <= 3) continue;
      for (int c = 0; c < 2; ++c)
        max_err = std::max(max_err,
                           std::abs(static_cast<double>(res.warped_ab[
                               (static_cast<int64_t>(c) * res.h + y) * res.w +
                               x]) -
                                    expect[(static_cast<int64_t>(c) * res.h +
                                            y) *
                                               res.w +
                                           x]));
      ++checked;
    }
  CHECK(checked > 0);
  CHECK(max_err < 2e-2);
}

TEST_CASE("align_reference: grayscale reference warps to zero") {
  Backbone<float> backbone(BackboneConfig::toy(), 1);
  CorrespondNet net(backbone.config(), 16, 2);
  const LabFrame x = colorful_frame(64, 64, 32);
  LabFrame gray;
  gray.l = colorful_frame(64, 64, 33).l;
  gray.ab = Array<float>::zeros({2, 64, 64});
  const WarpResult res = align_reference(backbone, net, x, gray);
  for (int64_t i = 0; i < res.warped_ab.size(); ++i)
    CHECK(std::abs(res.warped_ab[i]) < 1e-7f);
}

TEST_CASE("fuse rejects a pyramid with a missing level") {
  Backbone<float> backbone(BackboneConfig::toy(), 1);
  CorrespondNet net(backbone.config(), 16, 2);
  FeaturePyramid<float> pyr =
      backbone.extract(Array<float>::full({3, 32, 32}, 0.5f));
  pyr.levels[2] = nn::Var();  // drop level 4
  CHECK_THROWS_WITH_AS(net.fuse(pyr), doctest::Contains("level 4"),
                       std::invalid_argument);
}
