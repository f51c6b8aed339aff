// SPDX-License-Identifier: Apache-2.0

#include "recolor/correspond.hpp"

#include <cmath>

namespace recolor {

CorrespondNet::CorrespondNet(const BackboneConfig& backbone_cfg, int width,
                             uint64_t seed)
    : width_(width) {
  check(width >= 8 && width % 4 == 0, "CorrespondNet: width must be 4k >= 8");
  Rng rng = Rng::fork(seed, {0x636f7272ull});  // "corr"
  const int half = width / 2;
  adapt1_.resize(4);
  adapt2_.resize(4);
  // level 2: conv(half) then strided conv(width) down to H/4
  adapt1_[0] = nn::ConvInPrelu(backbone_cfg.level_channels(2), half, 1, rng);
  adapt2_[0] = nn::ConvInPrelu(half, width, 2, rng);
  // level 3: conv(half), conv(width) at H/4
  adapt1_[1] = nn::ConvInPrelu(backbone_cfg.level_channels(3), half, 1, rng);
  adapt2_[1] = nn::ConvInPrelu(half, width, 1, rng);
  // level 4: conv(width) at H/8, upsample + conv(width)
  adapt1_[2] = nn::ConvInPrelu(backbone_cfg.level_channels(4), width, 1, rng);
  adapt2_[2] = nn::ConvInPrelu(width, width, 1, rng);
  // level 5: upsample + conv(width) at H/8, upsample + conv(width)
  adapt1_[3] = nn::ConvInPrelu(backbone_cfg.level_channels(5), width, 1, rng);
  adapt2_[3] = nn::ConvInPrelu(width, width, 1, rng);

  blocks_.emplace_back(4 * width, width, rng);
  for (int i = 1; i < 4; ++i) blocks_.emplace_back(width, width, rng);
}

CorrespondNet::Grid CorrespondNet::fuse(const FeaturePyramid<float>& pyr,
                                        bool identity_resblocks) const {
  for (int l = 2; l <= 5; ++l)
    check(pyr.level(l).defined(),
          "fuse: pyramid level " + std::to_string(l) + " missing");
  const int h4 = pyr.level(3).value().dim(1);
  const int w4 = pyr.level(3).value().dim(2);
  const int h8 = pyr.level(4).value().dim(1);
  const int w8 = pyr.level(4).value().dim(2);

  nn::Var l2 = adapt2_[0](adapt1_[0](pyr.level(2)));
  l2 = nn::fit_to(l2, h4, w4);  // ceil-mode stride can overshoot odd sizes
  nn::Var l3 = adapt2_[1](adapt1_[1](pyr.level(3)));
  nn::Var l4 = adapt1_[2](pyr.level(4));
  l4 = adapt2_[2](ops::upsample_nearest(l4, h4, w4));
  nn::Var l5 = adapt1_[3](ops::upsample_nearest(pyr.level(5), h8, w8));
  l5 = adapt2_[3](ops::upsample_nearest(l5, h4, w4));

  nn::Var x = ops::concat_ch<float>({l2, l3, l4, l5});
  if (!identity_resblocks)
    for (const auto& block : blocks_) x = block(x);
  return Grid{ops::chw_to_rows(x), h4, w4};
}

void CorrespondNet::visit_params(const nn::ParamVisitor& fn) {
  static const char* level_names[4] = {"l2", "l3", "l4", "l5"};
  for (int i = 0; i < 4; ++i) {
    adapt1_[static_cast<size_t>(i)].visit(
        std::string("adapt.") + level_names[i] + ".a", fn);
    adapt2_[static_cast<size_t>(i)].visit(
        std::string("adapt.") + level_names[i] + ".b", fn);
  }
  for (size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].visit("res" + std::to_string(i), fn);
}

nn::Var correlate(const nn::Var& fx, const nn::Var& fy) {
  check(fx.value().ndim() == 2 && fy.value().ndim() == 2 &&
            fx.value().dim(1) == fy.value().dim(1),
        "correlate: grids must be (N,C)/(M,C) with equal C");
  constexpr float eps = 1e-12f;
  auto normalize = [](const nn::Var& f) {
    nn::Var centered = ops::sub_rowvec(f, ops::mean_over_rows(f));
    nn::Var norms = ops::sqrt(ops::add_const(ops::row_sumsq(centered), eps));
    return ops::div_colvec(centered, norms);
  };
  return ops::matmul(normalize(fx), normalize(fy), false, true);
}

Array<float> correlate_reference(const Array<float>& fx,
                                 const Array<float>& fy) {
  check(fx.ndim() == 2 && fy.ndim() == 2 && fx.dim(1) == fy.dim(1),
        "correlate_reference: grids must share C");
  const int n = fx.dim(0), m = fy.dim(0), c = fx.dim(1);
  auto center = [c](const Array<float>& f, int rows) {
    Array<float> out({rows, c});
    std::vector<float> mean(static_cast<size_t>(c), 0.0f);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < c; ++j)
        mean[static_cast<size_t>(j)] += f[static_cast<int64_t>(i) * c + j];
    for (int j = 0; j < c; ++j) mean[static_cast<size_t>(j)] /= rows;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < c; ++j)
        out[static_cast<int64_t>(i) * c + j] =
            f[static_cast<int64_t>(i) * c + j] - mean[static_cast<size_t>(j)];
    return out;
  };
  const Array<float> cx = center(fx, n);
  const Array<float> cy = center(fy, m);
  auto norms = [c](const Array<float>& f, int rows) {
    std::vector<float> out(static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) {
      float acc = 0.0f;
      for (int j = 0; j < c; ++j) {
        const float v = f[static_cast<int64_t>(i) * c + j];
        acc += v * v;
      }
      out[static_cast<size_t>(i)] = std::sqrt(acc);
    }
    return out;
  };
  const std::vector<float> nx = norms(cx, n);
  const std::vector<float> ny = norms(cy, m);

  Array<float> out({n, m});
  for (int i = 0; i < n; ++i) {
    const float* rx = cx.data() + static_cast<int64_t>(i) * c;
    for (int j = 0; j < m; ++j) {
      const float* ry = cy.data() + static_cast<int64_t>(j) * c;
      float dot = 0.0f;
      for (int k = 0; k < c; ++k) dot += rx[k] * ry[k];
      const float denom =
          nx[static_cast<size_t>(i)] * ny[static_cast<size_t>(j)];
      out[static_cast<int64_t>(i) * m + j] = denom > 0.0f ? dot / denom : 0.0f;
    }
  }
  return out;
}

nn::Var warp_colors(const nn::Var& m, const nn::Var& ref_ab_rows, float tau) {
  check(tau > 0.0f, "warp_colors: tau must be positive");
  check(m.value().ndim() == 2 && ref_ab_rows.value().ndim() == 2 &&
            ref_ab_rows.value().dim(0) == m.value().dim(1),
        "warp_colors: reference position count must match matrix columns");
  return ops::matmul(ops::softmax_rows(m, tau), ref_ab_rows);
}

nn::Var confidence_map(const nn::Var& m) { return ops::row_max(m); }

Array<float> area_downsample(const Array<float>& ab, int ho, int wo) {
  check(ab.ndim() == 3, "area_downsample: expects (C,H,W)");
  const int C = ab.dim(0), H = ab.dim(1), W = ab.dim(2);
  check(ho >= 1 && wo >= 1 && ho <= H && wo <= W, "area_downsample: target");
  Array<float> out({C, ho, wo});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < ho; ++y) {
      const int y0 = static_cast<int>(static_cast<int64_t>(y) * H / ho);
      const int y1 = std::max(
          y0 + 1, static_cast<int>(static_cast<int64_t>(y + 1) * H / ho));
      for (int x = 0; x < wo; ++x) {
        const int x0 = static_cast<int>(static_cast<int64_t>(x) * W / wo);
        const int x1 = std::max(
            x0 + 1, static_cast<int>(static_cast<int64_t>(x + 1) * W / wo));
        double acc = 0.0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) acc += ab.at(c, yy, xx);
        out.at(c, y, x) = static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
      }
    }
  return out;
}

WarpResult align_reference(const Backbone<float>& backbone,
                           const CorrespondNet& net, const LabFrame& input,
                           const LabFrame& reference,
                           const AlignOptions& opts) {
  input.validate();
  reference.validate();
  FeaturePyramid<float> px = backbone.extract_gray(input.l);
  FeaturePyramid<float> py = opts.ref_features_from_color
                                 ? backbone.extract(lab_to_rgb(reference))
                                 : backbone.extract_gray(reference.l);
  const CorrespondNet::Grid gx = net.fuse(px, opts.identity_resblocks);
  const CorrespondNet::Grid gy = net.fuse(py, opts.identity_resblocks);
  nn::Var m = correlate(gx.rows, gy.rows);

  const Array<float> ref_small = area_downsample(reference.ab, gy.h, gy.w);
  nn::Var ref_rows = ops::chw_to_rows(nn::Var::leaf(ref_small, false));
  nn::Var warped = warp_colors(m, ref_rows, opts.tau);
  nn::Var conf = confidence_map(m);

  WarpResult out;
  out.h = gx.h;
  out.w = gx.w;
  out.warped_ab = ops::rows_to_chw(warped, gx.h, gx.w).value().clone();
  out.confidence = conf.value().reshaped({gx.h, gx.w}).clone();
  return out;
}

}  // namespace recolor
