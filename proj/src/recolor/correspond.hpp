// SPDX-License-Identifier: Apache-2.0
//
// Correspondence subnet: per-level adapters resample the feature pyramid to
// the level-3 grid (H/4), four shared-weight residual blocks fuse them, and
// the mean-centered cosine correlation matrix drives softmax color warping
// and the confidence map.
#pragma once

#include <cstdint>
#include <vector>

#include "recolor/backbone.hpp"
#include "recolor/colorio.hpp"
#include "recolor/nn.hpp"

namespace recolor {

class CorrespondNet {
 public:
  // width: fused feature channels (paper-scale 256). Adapter first convs run
  // at width/2 for levels 2-3 and width for levels 4-5, per the reference
  // layer table.
  CorrespondNet(const BackboneConfig& backbone_cfg, int width, uint64_t seed);

  struct Grid {
    nn::Var rows;  // (h*w, C) row-major positions
    int h = 0, w = 0;
  };

  // Shared-weight fusion; identity_resblocks bypasses the residual stack
  // (adapter concat only), used by correspondence oracles.
  Grid fuse(const FeaturePyramid<float>& pyr,
            bool identity_resblocks = false) const;

  int width() const { return width_; }
  void visit_params(const nn::ParamVisitor& fn);

 private:
  int width_ = 0;
  // Two adapter convs per level (levels 2..5).
  std::vector<nn::ConvInPrelu> adapt1_, adapt2_;
  std::vector<nn::ResBlock> blocks_;
};

// Mean-centered cosine correlation between two feature grids. Zero-variance
// rows yield exact zero similarity. The matrix product runs on the blocked
// dispatched GEMM.
nn::Var correlate(const nn::Var& fx, const nn::Var& fy);

// Scalar double-loop reference for correlate: centered rows, per-row norms,
// then the N x M dot loop straight from the definition. Oracle for both
// values and speed.
Array<float> correlate_reference(const Array<float>& fx,
                                 const Array<float>& fy);

// Softmax color sampling: warped(i) = sum_j softmax_j(M(i,j)/tau) ref(j).
nn::Var warp_colors(const nn::Var& m, const nn::Var& ref_ab_rows, float tau);

// S(i) = max_j M(i,j).
nn::Var confidence_map(const nn::Var& m);

// Box-average chroma downsampling to the correlation grid.
Array<float> area_downsample(const Array<float>& ab, int ho, int wo);

struct WarpResult {
  Array<float> warped_ab;   // (2, h, w), convex combinations of the reference
  Array<float> confidence;  // (h, w) in [-1, 1]
  int h = 0, w = 0;
};

struct AlignOptions {
  float tau = 0.01f;
  bool ref_features_from_color = true;  // false: luminance only
  bool identity_resblocks = false;
};

// Full correspondence pass (inference): extract -> fuse -> correlate ->
// {warp, confidence}. The reference is assumed pre-resized to the input's
// dimensions.
WarpResult align_reference(const Backbone<float>& backbone,
                           const CorrespondNet& net, const LabFrame& input,
                           const LabFrame& reference,
                           const AlignOptions& opts = {});

}  // namespace recolor
