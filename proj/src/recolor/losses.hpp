// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: perceptual (level-5 feature MSE), contextual
// (forward-matched feature affinities), WLS-weighted smoothness,
// relativistic least-squares adversarial pair, flow-warped temporal
// consistency, chroma L1, and the weighted total. Everything here is
// differentiable and checked against central finite differences in double
// precision.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "recolor/backbone.hpp"
#include "recolor/ops_image.hpp"

namespace recolor {

enum class LossNorm { l1, l2 };

struct LossWeights {
  double lambda_perc = 0.001;
  double lambda_context = 0.2;
  double lambda_smooth = 5.0;
  double lambda_adv = 0.2;
  double lambda_temporal = 0.02;  // the reference hyperparameter list names
                                  // this lambda_flow; they are the same knob
  double lambda_l1 = 2.0;
  double tau = 0.01;
  double h = 0.1;       // contextual bandwidth
  double eps = 1e-5;    // contextual distance normalization
  double sigma_g = 0.1; // WLS guide bandwidth
  // Per-level contextual weights for levels 2..5; higher levels count more.
  double w_level[4] = {0.5, 1.0, 2.0, 4.0};
  int contextual_max_positions = 2048;
  LossNorm smooth_norm = LossNorm::l1;
  LossNorm temporal_norm = LossNorm::l1;

  std::string to_json() const;
  static LossWeights from_json(const std::string& json_text);
  void validate() const;
};

struct LossReport {
  double perceptual = 0.0;
  double contextual = 0.0;
  double smooth = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double temporal = 0.0;
  double l1 = 0.0;
  bool l1_active = false;
  bool adv_active = false;
  double total = 0.0;

  std::string to_json_line(int64_t step) const;
};

// ---------------- differentiable LAB -> sRGB render ----------------

namespace lossdetail {

// Inverse LAB ramp: t > delta ? t^3 : 3 delta^2 (t - 4/29).
template <typename T>
Var<T> lab_finv(const Var<T>& x) {
  constexpr double delta = 6.0 / 29.0;
  Array<T> out(x.value().shape());
  const T* px = x.value().data();
  for (int64_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(px[i]);
    out[i] = static_cast<T>(t > delta ? t * t * t
                                      : 3.0 * delta * delta * (t - 4.0 / 29.0));
  }
  return make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    if (!ops::wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) {
      const double t = static_cast<double>(v[i]);
      const double dt =
          t > delta ? 3.0 * t * t : 3.0 * delta * delta;
      g[i] += n.grad[i] * static_cast<T>(dt);
    }
  });
}

// sRGB gamma encode of linear values (input expected in [0,1]).
template <typename T>
Var<T> srgb_encode(const Var<T>& x) {
  Array<T> out(x.value().shape());
  const T* px = x.value().data();
  for (int64_t i = 0; i < out.size(); ++i) {
    const double c = static_cast<double>(px[i]);
    out[i] = static_cast<T>(c <= 0.0031308
                                ? 12.92 * c
                                : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055);
  }
  return make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    if (!ops::wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) {
      const double c = static_cast<double>(v[i]);
      const double dc = c <= 0.0031308
                            ? 12.92
                            : (1.055 / 2.4) * std::pow(std::max(c, 1e-8),
                                                       1.0 / 2.4 - 1.0);
      g[i] += n.grad[i] * static_cast<T>(dc);
    }
  });
}

}  // namespace lossdetail

// Differentiable render of normalized LAB planes to sRGB (3,H,W) in [0,1].
template <typename T>
Var<T> render_lab_to_rgb(const Var<T>& l, const Var<T>& ab) {
  check(l.value().ndim() == 2 && ab.value().ndim() == 3 &&
            ab.value().dim(0) == 2,
        "render_lab_to_rgb: expects (H,W) and (2,H,W)");
  const int h = l.value().dim(0), w = l.value().dim(1);
  Var<T> lab3 =
      ops::concat_ch<T>({ops::reshape(l, {1, h, w}), ab});
  // (fx,fy,fz) = A (l,a,b) + 16/116 with the normalization folded in.
  Array<T> a_mat({3, 3});
  const double s = 100.0 / 116.0;
  const double coeffs[9] = {s, 127.0 / 500.0, 0.0, s, 0.0, 0.0,
                            s, 0.0,           -127.0 / 200.0};
  for (int i = 0; i < 9; ++i) a_mat[i] = static_cast<T>(coeffs[i]);
  Var<T> f = ops::add_const(ops::channel_matrix(lab3, a_mat),
                            static_cast<T>(16.0 / 116.0));
  Var<T> xyz_unit = lossdetail::lab_finv(f);
  Array<T> white_shift = Array<T>::zeros({3});
  Array<T> white_scale({3});
  white_scale[0] = static_cast<T>(0.95047);
  white_scale[1] = static_cast<T>(1.0);
  white_scale[2] = static_cast<T>(1.08883);
  Var<T> xyz = ops::channel_affine(xyz_unit, white_shift, white_scale);
  Array<T> m_inv({3, 3});
  const double inv[9] = {3.2404542,  -1.5371385, -0.4985314,
                         -0.9692660, 1.8760108,  0.0415560,
                         0.0556434,  -0.2040259, 1.0572252};
  for (int i = 0; i < 9; ++i) m_inv[i] = static_cast<T>(inv[i]);
  Var<T> lin = ops::clamp(ops::channel_matrix(xyz, m_inv), T(0), T(1));
  return lossdetail::srgb_encode(lin);
}

// ---------------- individual objectives ----------------

// Mean squared difference of level-5 backbone features.
template <typename T>
Var<T> perceptual_loss(const Backbone<T>& backbone, const Var<T>& pred_rgb,
                       const Var<T>& gt_rgb) {
  check(pred_rgb.value().same_shape(gt_rgb.value()),
        "perceptual_loss: size mismatch");
  Var<T> fp = backbone.extract(pred_rgb).level(5);
  Var<T> fg = backbone.extract(gt_rgb).level(5);
  return ops::mean_all(ops::square(ops::sub(fp, fg)));
}

// Deterministic strided position subsample (same pattern for both grids)
// keeping at most max_positions rows.
inline std::vector<int> contextual_subsample(int h, int w, int max_positions) {
  const int64_t n = static_cast<int64_t>(h) * w;
  int stride = 1;
  while (n / (static_cast<int64_t>(stride) * stride) >
         static_cast<int64_t>(max_positions))
    ++stride;
  std::vector<int> idx;
  for (int y = 0; y < h; y += stride)
    for (int x = 0; x < w; x += stride) idx.push_back(y * w + x);
  return idx;
}

// Forward-matched contextual loss over pyramid levels 2..5:
// d = 1 - cos(centered features), dt = d / (min_k d + eps),
// A = softmax_j(1 - dt/h), level term = -log(mean_i max_j A).
template <typename T>
Var<T> contextual_loss(const FeaturePyramid<T>& pred,
                       const FeaturePyramid<T>& ref, const LossWeights& lw) {
  Var<T> total = Var<T>::leaf(Array<T>::scalar(T(0)));
  for (int level = 2; level <= 5; ++level) {
    const Var<T>& fp = pred.level(level);
    const Var<T>& fr = ref.level(level);
    check(fp.value().same_shape(fr.value()),
          "contextual_loss: feature geometry mismatch at level " +
              std::to_string(level));
    const int h = fp.value().dim(1), w = fp.value().dim(2);
    const std::vector<int> idx =
        contextual_subsample(h, w, lw.contextual_max_positions);
    auto rows = [&idx](const Var<T>& f) {
      Var<T> r = ops::chw_to_rows(f);
      if (static_cast<int64_t>(idx.size()) < r.value().dim(0))
        r = ops::gather_rows(r, idx);
      // center by the image's own mean feature, then L2-normalize rows
      Var<T> centered = ops::sub_rowvec(r, ops::mean_over_rows(r));
      Var<T> norms =
          ops::sqrt(ops::add_const(ops::row_sumsq(centered), T(1e-12)));
      return ops::div_colvec(centered, norms);
    };
    Var<T> sim = ops::matmul(rows(fp), rows(fr), false, true);
    Var<T> d = ops::add_const(ops::scale(sim, T(-1)), T(1));
    Var<T> dmin = ops::add_const(ops::row_min(d), static_cast<T>(lw.eps));
    Var<T> dt = ops::div_colvec(d, dmin);
    Var<T> arg = ops::add_const(
        ops::scale(dt, static_cast<T>(-1.0 / lw.h)), T(1));
    Var<T> affinities = ops::softmax_rows(arg);
    Var<T> cx = ops::mean_all(ops::row_max(affinities));
    Var<T> level_term = ops::scale(ops::log(cx), T(-1));
    total = ops::add(
        total,
        ops::scale(level_term, static_cast<T>(lw.w_level[level - 2])));
  }
  return total;
}

// ---------------- smoothness ----------------

// 8-neighborhood offsets, fixed order.
inline constexpr int kNeighborDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
inline constexpr int kNeighborDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

// WLS-style weights from a guide plane: w_ij = exp(-(g_i-g_j)^2/(2 sigma^2))
// over the 8-neighborhood, row-normalized; out-of-bounds neighbors get zero
// weight and the normalization runs over whatever exists.
template <typename T>
Array<T> wls_weights_from_guide(const Array<T>& guide, double sigma_g) {
  check(guide.ndim() == 2, "wls_weights: guide must be (H,W)");
  const int h = guide.dim(0), w = guide.dim(1);
  Array<T> weights({8, h, w});
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma_g * sigma_g);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gi =
          static_cast<double>(guide[static_cast<int64_t>(y) * w + x]);
      double sum = 0.0;
      double vals[8] = {0};
      for (int k = 0; k < 8; ++k) {
        const int ny = y + kNeighborDy[k], nx = x + kNeighborDx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const double gj =
            static_cast<double>(guide[static_cast<int64_t>(ny) * w + nx]);
        const double d = gi - gj;
        vals[k] = std::exp(-d * d * inv_two_sigma2);
        sum += vals[k];
      }
      for (int k = 0; k < 8; ++k)
        weights.at(k, y, x) =
            sum > 0.0 ? static_cast<T>(vals[k] / sum) : T(0);
    }
  return weights;
}

namespace lossdetail {

// y(c,p) = sum_k w(k,p) x(c, p+off_k); weights constant.
template <typename T>
Var<T> neighbor_weighted_avg(const Var<T>& x, const Array<T>& weights) {
  check(x.value().ndim() == 3 && weights.ndim() == 3 && weights.dim(0) == 8 &&
            weights.dim(1) == x.value().dim(1) &&
            weights.dim(2) == x.value().dim(2),
        "neighbor_weighted_avg: shapes");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  Array<T> out({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x2 = 0; x2 < W; ++x2) {
        double acc = 0.0;
        for (int k = 0; k < 8; ++k) {
          const int ny = y + kNeighborDy[k], nx = x2 + kNeighborDx[k];
          if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
          acc += static_cast<double>(weights.at(k, y, x2)) *
                 x.value().at(c, ny, nx);
        }
        out.at(c, y, x2) = static_cast<T>(acc);
      }
  Array<T> w_copy = weights;
  return make_op<T>(std::move(out), {x}, [C, H, W, w_copy](Node<T>& n) {
    if (!ops::wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2) {
          const T gv = n.grad.at(c, y, x2);
          if (gv == T(0)) continue;
          for (int k = 0; k < 8; ++k) {
            const int ny = y + kNeighborDy[k], nx = x2 + kNeighborDx[k];
            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            g.at(c, ny, nx) += gv * w_copy.at(k, y, x2);
          }
        }
  });
}

}  // namespace lossdetail

// Mean deviation between each chroma value and its weighted neighborhood
// average (mean over both channels and all pixels).
template <typename T>
Var<T> smoothness_loss(const Var<T>& pred_ab, const Array<T>& weights,
                       LossNorm norm = LossNorm::l1) {
  check(pred_ab.value().ndim() == 3 && pred_ab.value().dim(0) == 2,
        "smoothness_loss: pred_ab must be (2,H,W)");
  Var<T> avg = lossdetail::neighbor_weighted_avg(pred_ab, weights);
  Var<T> dev = ops::sub(pred_ab, avg);
  return ops::mean_all(norm == LossNorm::l1 ? ops::abs(dev)
                                            : ops::square(dev));
}

// Convenience: weights from the ground-truth frame's luminance.
template <typename T>
Var<T> smoothness_loss_guided(const Var<T>& pred_ab, const Array<T>& guide_l,
                              const LossWeights& lw) {
  return smoothness_loss(pred_ab,
                         wls_weights_from_guide<T>(guide_l, lw.sigma_g),
                         lw.smooth_norm);
}

// ---------------- adversarial (relativistic LSGAN) ----------------

struct AdvPair {
  template <typename T>
  struct Losses {
    Var<T> g, d;
  };
};

// Batch means stand in for the expectations. Generator: fake - E[real]
// targets +1 and real - E[fake] targets -1; the discriminator loss mirrors
// the roles.
template <typename T>
typename AdvPair::Losses<T> adversarial_losses(const Var<T>& fake_scores,
                                               const Var<T>& real_scores) {
  check(fake_scores.value().ndim() == 1 && real_scores.value().ndim() == 1 &&
            fake_scores.value().dim(0) == real_scores.value().dim(0),
        "adversarial_losses: batches must match");
  Var<T> mean_fake = ops::mean_all(fake_scores);
  Var<T> mean_real = ops::mean_all(real_scores);
  auto rel = [](const Var<T>& a, const Var<T>& mean_b, T target) {
    return ops::mean_all(ops::square(
        ops::add_const(ops::sub_scalar_var(a, mean_b), -target)));
  };
  typename AdvPair::Losses<T> out;
  out.g = ops::add(rel(fake_scores, mean_real, T(1)),
                   rel(real_scores, mean_fake, T(-1)));
  out.d = ops::add(rel(real_scores, mean_fake, T(1)),
                   rel(fake_scores, mean_real, T(-1)));
  return out;
}

// ---------------- temporal & L1 ----------------

// warp_by_flow: sample frame at backward-mapped coordinates p - flow(p).
template <typename T>
Var<T> warp_by_flow(const Var<T>& frame_ab, const Array<T>& flow) {
  return ops::warp_backward(frame_ab, flow);
}

// Mean |warp(prev) - cur| over unmasked pixels and both channels; exact
// zero when the mask excludes everything.
template <typename T>
Var<T> temporal_loss(const Var<T>& prev_ab, const Var<T>& cur_ab,
                     const Array<T>& flow, const Array<T>& mask,
                     LossNorm norm = LossNorm::l1) {
  check(cur_ab.value().ndim() == 3 && cur_ab.value().dim(0) == 2,
        "temporal_loss: cur_ab must be (2,H,W)");
  check(mask.ndim() == 2 && mask.dim(0) == cur_ab.value().dim(1) &&
            mask.dim(1) == cur_ab.value().dim(2),
        "temporal_loss: mask shape");
  double mask_sum = 0.0;
  for (int64_t i = 0; i < mask.size(); ++i) mask_sum += mask[i];
  if (mask_sum == 0.0) return Var<T>::leaf(Array<T>::scalar(T(0)));
  Array<T> mask2({2, mask.dim(0), mask.dim(1)});
  for (int64_t i = 0; i < mask.size(); ++i) {
    mask2[i] = mask[i];
    mask2[mask.size() + i] = mask[i];
  }
  Var<T> warped = warp_by_flow(prev_ab, flow);
  Var<T> dev = ops::mul_array(ops::sub(warped, cur_ab), mask2);
  Var<T> per_elem =
      norm == LossNorm::l1 ? ops::abs(dev) : ops::square(dev);
  return ops::scale(ops::sum_all(per_elem),
                    static_cast<T>(1.0 / (2.0 * mask_sum)));
}

// Mean absolute chroma difference.
template <typename T>
Var<T> l1_loss(const Var<T>& pred_ab, const Var<T>& gt_ab) {
  check(pred_ab.value().same_shape(gt_ab.value()), "l1_loss: size mismatch");
  return ops::mean_all(ops::abs(ops::sub(pred_ab, gt_ab)));
}

// ---------------- total ----------------

template <typename T>
struct GeneratorTerms {
  Var<T> perceptual, contextual, smooth, adv_g, temporal, l1;
};

// Weighted sum of the generator objectives. The L1 term participates only
// when the reference shares the clip's scene; the adversarial term only
// after warm-up. Absent-but-required terms are an error.
template <typename T>
Var<T> total_loss(const GeneratorTerms<T>& terms, const LossWeights& lw,
                  bool use_l1, bool use_adv, LossReport* report) {
  check(terms.perceptual.defined() && terms.contextual.defined() &&
            terms.smooth.defined() && terms.temporal.defined(),
        "total_loss: missing generator term");
  check(!use_adv || terms.adv_g.defined(),
        "total_loss: adversarial term required but missing");
  check(!use_l1 || terms.l1.defined(),
        "total_loss: L1 term required but missing");
  Var<T> total =
      ops::scale(terms.perceptual, static_cast<T>(lw.lambda_perc));
  total = ops::add(
      total, ops::scale(terms.contextual, static_cast<T>(lw.lambda_context)));
  total = ops::add(total,
                   ops::scale(terms.smooth, static_cast<T>(lw.lambda_smooth)));
  if (use_adv)
    total = ops::add(total,
                     ops::scale(terms.adv_g, static_cast<T>(lw.lambda_adv)));
  total = ops::add(
      total, ops::scale(terms.temporal, static_cast<T>(lw.lambda_temporal)));
  if (use_l1)
    total =
        ops::add(total, ops::scale(terms.l1, static_cast<T>(lw.lambda_l1)));
  if (report) {
    report->perceptual = static_cast<double>(terms.perceptual.item());
    report->contextual = static_cast<double>(terms.contextual.item());
    report->smooth = static_cast<double>(terms.smooth.item());
    report->adv_g =
        use_adv ? static_cast<double>(terms.adv_g.item()) : 0.0;
    report->temporal = static_cast<double>(terms.temporal.item());
    report->l1 = use_l1 ? static_cast<double>(terms.l1.item()) : 0.0;
    report->l1_active = use_l1;
    report->adv_active = use_adv;
    report->total = static_cast<double>(total.item());
  }
  return total;
}

}  // namespace recolor
