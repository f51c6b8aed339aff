// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "recolor/backbone.hpp"
#include "testutil.hpp"

using namespace recolor;
using testutil::random_array;

namespace {

Backbone<float> toy_backbone(uint64_t seed = 1) {
  return Backbone<float>(BackboneConfig::toy(), seed);
}

}  // namespace

TEST_CASE("64x64 input gives level sizes 32,16,8,4") {
  Backbone<float> net = toy_backbone();
  Rng rng(5);
  const FeaturePyramid<float> pyr =
      net.extract(random_array<float>({3, 64, 64}, rng, 0.0f, 1.0f));
  const BackboneConfig cfg = BackboneConfig::toy();
  int expect = 32;
  for (int level = 2; level <= 5; ++level) {
    CHECK(pyr.level(level).value().dim(1) == expect);
    CHECK(pyr.level(level).value().dim(2) == expect);
    CHECK(pyr.level(level).value().dim(0) == cfg.level_channels(level));
    expect /= 2;
  }
  CHECK(pyr.provenance == "toy");
}

TEST_CASE("identical inputs give bitwise identical pyramids") {
  Backbone<float> net = toy_backbone();
  Rng rng(6);
  const Array<float> img = random_array<float>({3, 33, 40}, rng, 0.0f, 1.0f);
  const FeaturePyramid<float> a = net.extract(img);
  const FeaturePyramid<float> b = net.extract(img);
  for (int level = 2; level <= 5; ++level) {
    const Array<float>& va = a.level(level).value();
    const Array<float>& vb = b.level(level).value();
    REQUIRE(va.size() == vb.size());
    CHECK(std::memcmp(va.data(), vb.data(),
                      sizeof(float) * static_cast<size_t>(va.size())) == 0);
  }
}

TEST_CASE("single-pixel perturbation stays inside the level-2 receptive field") {
  Backbone<float> net = toy_backbone();
  Rng rng(7);
  Array<float> img = random_array<float>({3, 48, 48}, rng, 0.1f, 0.9f);
  const int py = 23, px = 17;
  const FeaturePyramid<float> base = net.extract(img);
  img.at(0, py, px) += 0.05f;
  const FeaturePyramid<float> bumped = net.extract(img);

  // Receptive-field box at level 2, derived from the layer stack: two 3x3
  // convs (+-2), then pool cell q is touched iff {2q,2q+1} meets [p-2,p+2],
  // then two more convs (+-2) on the half-resolution grid.
  auto lo = [](int p) { return (p - 2) / 2 - 2; };  // ceil((p-3)/2) - 2
  auto hi = [](int p) { return (p + 2) / 2 + 2; };
  const Array<float>& a = base.level(2).value();
  const Array<float>& b = bumped.level(2).value();
  bool any_diff = false;
  for (int c = 0; c < a.dim(0); ++c)
    for (int y = 0; y < a.dim(1); ++y)
      for (int x = 0; x < a.dim(2); ++x) {
        if (a.at(c, y, x) == b.at(c, y, x)) continue;
        any_diff = true;
        CHECK(y >= lo(py));
        CHECK(y <= hi(py));
        CHECK(x >= lo(px));
        CHECK(x <= hi(px));
      }
  CHECK(any_diff);
}

TEST_CASE("toy extraction is translation covariant away from borders") {
  Backbone<float> net = toy_backbone();
  Rng rng(8);
  const int h = 48, w = 48, shift = 2;
  Array<float> img({3, h, w});
  img.fill(0.5f);
  // content patch away from every border
  for (int c = 0; c < 3; ++c)
    for (int y = 12; y < 36; ++y)
      for (int x = 12; x < 36; ++x)
        img.at(c, y, x) = static_cast<float>(rng.uniform());
  Array<float> shifted({3, h, w});
  shifted.fill(0.5f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h - shift; ++y)
      for (int x = 0; x < w - shift; ++x)
        shifted.at(c, y + shift, x + shift) = img.at(c, y, x);

  const FeaturePyramid<float> a = net.extract(img);
  const FeaturePyramid<float> b = net.extract(shifted);
  // level 2 (stride 2): shift by 1 feature cell; compare interiors
  const Array<float>& fa = a.level(2).value();
  const Array<float>& fb = b.level(2).value();
  const int margin = 6;
  double max_err = 0.0;
  for (int c = 0; c < fa.dim(0); ++c)
    for (int y = margin; y < fa.dim(1) - margin - 1; ++y)
      for (int x = margin; x < fa.dim(2) - margin - 1; ++x)
        max_err = std::max(
            max_err, std::abs(static_cast<double>(fa.at(c, y, x)) -
                              fb.at(c, y + 1, x + 1)));
  CHECK(max_err < 1e-5);
}

TEST_CASE("inputs below the minimum size are rejected") {
  Backbone<float> net = toy_backbone();
  CHECK_THROWS_WITH_AS(net.extract(Array<float>::zeros({3, 15, 64})),
                       doctest::Contains("level 5 would vanish"),
                       std::invalid_argument);
  // 16x16 is the smallest valid input (level 5 becomes 1x1).
  const FeaturePyramid<float> pyr =
      net.extract(Array<float>::full({3, 16, 16}, 0.5f));
  CHECK(pyr.level(5).value().dim(1) == 1);
}

TEST_CASE("perturb_features: zero std is the identity") {
  Backbone<float> net = toy_backbone();
  Rng rng(9);
  const FeaturePyramid<float> pyr =
      net.extract(random_array<float>({3, 32, 32}, rng, 0.0f, 1.0f));
  const FeaturePyramid<float> same =
      perturb_features(pyr, 0.0f, Rng::fork(1, {2}));
  for (int level = 2; level <= 5; ++level)
    CHECK(testutil::max_abs_diff(pyr.level(level).value(),
                                 same.level(level).value()) == 0.0);
}

TEST_CASE("perturb_features: noise statistics and seeded determinism") {
  FeaturePyramid<float> zero_pyr;
  zero_pyr.provenance = "toy";
  // 128x128-equivalent level sizes so every level has >= 4096 elements
  const int sizes[4] = {64, 32, 16, 8};
  const int chans[4] = {16, 32, 64, 64};
  for (int i = 0; i < 4; ++i)
    zero_pyr.levels[static_cast<size_t>(i)] =
        Var<float>::leaf(Array<float>::zeros({chans[i], sizes[i], sizes[i]}));

  const FeaturePyramid<float> noisy =
      perturb_features(zero_pyr, 1.0f, Rng::fork(7, {1}));
  for (int level = 2; level <= 5; ++level) {
    const Array<float>& v = noisy.level(level).value();
    REQUIRE(v.size() >= 4096);
    double sum = 0.0, sumsq = 0.0;
    for (int64_t i = 0; i < v.size(); ++i) {
      sum += v[i];
      sumsq += static_cast<double>(v[i]) * v[i];
    }
    const double n = static_cast<double>(v.size());
    const double std_dev = std::sqrt(sumsq / n - (sum / n) * (sum / n));
    INFO("level=", level);
    CHECK(std_dev == doctest::Approx(1.0).epsilon(0.05));
  }

  const FeaturePyramid<float> again =
      perturb_features(zero_pyr, 1.0f, Rng::fork(7, {1}));
  for (int level = 2; level <= 5; ++level)
    CHECK(testutil::max_abs_diff(noisy.level(level).value(),
                                 again.level(level).value()) == 0.0);
}

TEST_CASE("backbone checkpoint round trip reproduces features bitwise") {
  namespace fs = std::filesystem;
  Backbone<float> net = toy_backbone(123);
  const fs::path path = fs::temp_directory_path() / "recolor_backbone.rcpk";
  save_backbone(net, path.string());
  Backbone<float> loaded = load_backbone(path.string());
  CHECK(loaded.config().provenance == "toy");

  Rng rng(10);
  const Array<float> img = random_array<float>({3, 32, 48}, rng, 0.0f, 1.0f);
  const FeaturePyramid<float> a = net.extract(img);
  const FeaturePyramid<float> b = loaded.extract(img);
  for (int level = 2; level <= 5; ++level)
    CHECK(std::memcmp(a.level(level).value().data(),
                      b.level(level).value().data(),
                      sizeof(float) *
                          static_cast<size_t>(a.level(level).value().size())) ==
          0);
}

TEST_CASE("gradient flows through extraction to the input, not the weights") {
  Backbone<double> net(BackboneConfig::toy(), 3);
  Rng rng(11);
  Var<double> img =
      Var<double>::leaf(random_array<double>({3, 16, 16}, rng, 0.0, 1.0), true);
  Var<double> loss = ops::mean_all(ops::square(net.extract(img).level(5)));
  loss.backward();
  double gnorm = 0.0;
  for (int64_t i = 0; i < img.grad().size(); ++i)
    gnorm += std::abs(img.grad()[i]);
  CHECK(gnorm > 0.0);
  net.visit_params([](const std::string&, const Var<double>& p) {
    CHECK(!p.requires_grad());
  });
}
