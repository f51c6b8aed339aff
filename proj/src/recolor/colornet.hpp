// SPDX-License-Identifier: Apache-2.0
//
// Colorization subnet: auto-encoder over (luminance, warped color,
// confidence, previous colorized frame) with three halving encoder blocks,
// three 512-channel residual bottleneck blocks with local skips, a mirrored
// decoder with global skip connections, and a tanh chroma head. All convs
// are spectrally normalized; instance norm closes each block. Forward is
// non-const because training mode advances the power-iteration buffers.
#pragma once

#include <cstdint>
#include <vector>

#include "recolor/colorio.hpp"
#include "recolor/nn.hpp"

namespace recolor {

struct ColorNetInput {
  Array<float> x_l;        // (H,W) luminance
  Array<float> warped_ab;  // (2,H,W) upsampled warped reference chroma
  Array<float> confidence; // (H,W) upsampled matching confidence
  Array<float> prev_lab;   // (3,H,W) previous colorized frame (l,a,b)
};

class ColorNet {
 public:
  // base_width: first encoder width (paper-scale 64; CI runs 16).
  ColorNet(int base_width, uint64_t seed);

  // Graph-building forward; inputs may be leaves or graph Vars.
  nn::Var forward(const nn::Var& x_l, const nn::Var& warped_ab,
                  const nn::Var& confidence, const nn::Var& prev_lab,
                  bool update_sn);

  // Inference wrapper over arrays; output (2,H,W) strictly inside (-1,1).
  Array<float> colorize(const ColorNetInput& input);

  int base_width() const { return base_; }
  void visit_params(const nn::ParamVisitor& fn);
  void visit_buffers(
      const std::function<void(const std::string&, Array<float>&)>& fn);

 private:
  struct SpectralBlock {
    std::vector<nn::SpectralConv> convs;
    nn::InstanceNorm norm;

    SpectralBlock() = default;
    SpectralBlock(int cin, int cout, int n_convs, int first_stride, Rng& rng) {
      for (int i = 0; i < n_convs; ++i)
        convs.emplace_back(i == 0 ? cin : cout, cout, 3,
                           i == 0 ? first_stride : 1, 1, rng);
      norm = nn::InstanceNorm(cout);
    }
    nn::Var operator()(nn::Var x, bool update_sn) {
      for (auto& c : convs) x = ops::relu(c(x, update_sn));
      return norm(x);
    }
    void visit(const std::string& p, const nn::ParamVisitor& fn) {
      for (size_t i = 0; i < convs.size(); ++i)
        convs[i].visit(p + ".conv" + std::to_string(i), fn);
      norm.visit(p + ".norm", fn);
    }
    void visit_buffers(
        const std::string& p,
        const std::function<void(const std::string&, Array<float>&)>& fn) {
      for (size_t i = 0; i < convs.size(); ++i)
        convs[i].visit_buffers(p + ".conv" + std::to_string(i), fn);
    }
  };

  // Bottleneck residual block: three convs plus projected local skip.
  struct BottleneckBlock {
    std::vector<nn::SpectralConv> convs;
    nn::SpectralConv proj;
    nn::InstanceNorm norm;
    bool has_proj = false;

    BottleneckBlock() = default;
    BottleneckBlock(int cin, int cout, Rng& rng) : has_proj(cin != cout) {
      convs.emplace_back(cin, cout, 3, 1, 1, rng);
      convs.emplace_back(cout, cout, 3, 1, 1, rng);
      convs.emplace_back(cout, cout, 3, 1, 1, rng);
      if (has_proj) proj = nn::SpectralConv(cin, cout, 1, 1, 0, rng);
      norm = nn::InstanceNorm(cout);
    }
    nn::Var operator()(const nn::Var& x, bool update_sn) {
      nn::Var y = x;
      for (size_t i = 0; i < convs.size(); ++i) {
        y = convs[i](y, update_sn);
        if (i + 1 < convs.size()) y = ops::relu(y);
      }
      y = norm(y);
      return ops::add(y, has_proj ? proj(x, update_sn) : x);
    }
    void visit(const std::string& p, const nn::ParamVisitor& fn) {
      for (size_t i = 0; i < convs.size(); ++i)
        convs[i].visit(p + ".conv" + std::to_string(i), fn);
      if (has_proj) proj.visit(p + ".proj", fn);
      norm.visit(p + ".norm", fn);
    }
    void visit_buffers(
        const std::string& p,
        const std::function<void(const std::string&, Array<float>&)>& fn) {
      for (size_t i = 0; i < convs.size(); ++i)
        convs[i].visit_buffers(p + ".conv" + std::to_string(i), fn);
      if (has_proj) proj.visit_buffers(p + ".proj", fn);
    }
  };

  int base_ = 0;
  SpectralBlock enc1_, enc2_, enc3_;
  BottleneckBlock res1_, res2_, res3_;
  SpectralBlock dec7_, dec8_, dec9_;
  nn::SpectralConv head_;
};

// Joins luminance and chroma planes into a LabFrame.
LabFrame compose_frame(const Array<float>& x_l, const Array<float>& ab);

}  // namespace recolor
