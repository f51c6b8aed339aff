// SPDX-License-Identifier: Apache-2.0
//
// Relativistic video discriminator over consecutive LAB frame pairs
// (6-channel stacks): six spectrally-normalized stride-2 convs with
// self-attention after the first, a kernel-3 conv to one channel, then
// global average pooling to a scalar realism score.
#pragma once

#include <cstdint>
#include <vector>

#include "recolor/colorio.hpp"
#include "recolor/nn.hpp"

namespace recolor {

struct FramePair {
  LabFrame prev, cur;

  // (6,H,W) stack: prev(l,a,b) then cur(l,a,b).
  Array<float> stacked() const;
};

class Discriminator {
 public:
  // base_width: first conv width (paper-scale 64; CI runs 16).
  Discriminator(int base_width, uint64_t seed);

  // x: (6,H,W) with H and W divisible by 64. Returns a scalar Var.
  nn::Var score(const nn::Var& x, bool update_sn);

  // Inference scores for a batch of pairs (detached, per-item).
  std::vector<double> discriminate(const std::vector<FramePair>& batch);

  int base_width() const { return base_; }
  void visit_params(const nn::ParamVisitor& fn);
  void visit_buffers(
      const std::function<void(const std::string&, Array<float>&)>& fn);

  // Largest power-iteration sigma estimate across normalized conv weights;
  // the spectral-norm invariant keeps this near one.
  float max_normalized_sigma();

 private:
  int base_ = 0;
  std::vector<nn::SpectralConv> convs_;  // six stride-2 k4 convs
  nn::SelfAttention attn_;
  nn::SpectralConv head_;  // k3 conv to 1 channel
};

}  // namespace recolor
