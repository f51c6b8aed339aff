// SPDX-License-Identifier: Apache-2.0
//
// Frozen multi-level feature extractor. Levels 2..5 tap the second conv of
// stages 2..5 at strides 2,4,8,16. Two configurations: a VGG19-compatible
// stack loaded from a checkpoint, and a small seeded "toy" stack (softplus
// activations, average pooling -- smooth end to end) used by tests and CI.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "recolor/ops_image.hpp"
#include "recolor/rng.hpp"

namespace recolor {

struct BackboneConfig {
  std::string provenance;           // "toy" or "pretrained"
  std::vector<int> stage_channels;  // 5 stages
  std::vector<int> stage_convs;     // convs per stage
  bool relu_maxpool = true;         // false: softplus + average pooling
  std::array<float, 3> input_mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> input_std{0.5f, 0.5f, 0.5f};

  static BackboneConfig toy();
  static BackboneConfig vgg19();

  int level_channels(int level) const {  // level in 2..5
    return stage_channels.at(static_cast<size_t>(level - 1));
  }
};

// Smallest input for which level 5 (stride 16, floor pooling) is non-empty.
constexpr int kMinBackboneInput = 16;

template <typename T>
struct FeaturePyramid {
  std::array<Var<T>, 4> levels;  // index 0 -> level 2 ... index 3 -> level 5
  std::string provenance;

  const Var<T>& level(int l) const { return levels.at(static_cast<size_t>(l - 2)); }
  Var<T>& level(int l) { return levels.at(static_cast<size_t>(l - 2)); }
};

template <typename T>
class Backbone {
 public:
  Backbone(BackboneConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    Rng rng = Rng::fork(seed, {0x6261636bull});  // "back"
    int cin = 3;
    for (size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
      const int cout = cfg_.stage_channels[s];
      for (int i = 0; i < cfg_.stage_convs[s]; ++i) {
        const T std_dev =
            std::sqrt(T(2) / (static_cast<T>(cin) * 9));
        weights_.push_back(
            Var<T>::leaf(Array<T>::randn({cout, cin, 3, 3}, rng, std_dev),
                         /*requires_grad=*/false));
        biases_.push_back(
            Var<T>::leaf(Array<T>::zeros({cout}), /*requires_grad=*/false));
        cin = cout;
      }
    }
  }

  const BackboneConfig& config() const { return cfg_; }

  // rgb: (3,H,W) Var in [0,1]; gradients flow through to the input, never
  // into the frozen weights.
  FeaturePyramid<T> extract(const Var<T>& rgb) const {
    check(rgb.value().ndim() == 3 && rgb.value().dim(0) == 3,
          "backbone: expects (3,H,W)");
    const int h = rgb.value().dim(1), w = rgb.value().dim(2);
    check(h >= kMinBackboneInput && w >= kMinBackboneInput,
          "backbone: input below " + std::to_string(kMinBackboneInput) +
              "x" + std::to_string(kMinBackboneInput) +
              " (level 5 would vanish)");
    Array<T> mean({3}), inv_std({3});
    for (int c = 0; c < 3; ++c) {
      mean[c] = static_cast<T>(cfg_.input_mean[static_cast<size_t>(c)]);
      inv_std[c] =
          T(1) / static_cast<T>(cfg_.input_std[static_cast<size_t>(c)]);
    }
    Var<T> x = ops::channel_affine(rgb, mean, inv_std);
    FeaturePyramid<T> pyr;
    pyr.provenance = cfg_.provenance;
    size_t conv_idx = 0;
    for (size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
      if (s > 0) x = cfg_.relu_maxpool ? ops::maxpool2(x) : ops::avgpool2(x);
      for (int i = 0; i < cfg_.stage_convs[s]; ++i) {
        x = ops::conv2d(x, weights_[conv_idx], biases_[conv_idx], 1, 1);
        x = cfg_.relu_maxpool ? ops::relu(x) : ops::softplus(x);
        ++conv_idx;
        if (s >= 1 && i == 1) pyr.levels[s - 1] = x;
      }
    }
    return pyr;
  }

  FeaturePyramid<T> extract(const Array<T>& rgb) const {
    return extract(Var<T>::leaf(rgb, false));
  }

  // Grayscale input: the single channel is replicated to three.
  FeaturePyramid<T> extract_gray(const Array<T>& gray) const {
    check(gray.ndim() == 2, "backbone: gray input must be (H,W)");
    Array<T> rgb({3, gray.dim(0), gray.dim(1)});
    const int64_t plane = gray.size();
    for (int c = 0; c < 3; ++c)
      for (int64_t i = 0; i < plane; ++i) rgb[c * plane + i] = gray[i];
    return extract(rgb);
  }

  void visit_params(
      const std::function<void(const std::string&, const Var<T>&)>& fn) const {
    size_t conv_idx = 0;
    for (size_t s = 0; s < cfg_.stage_channels.size(); ++s)
      for (int i = 0; i < cfg_.stage_convs[s]; ++i) {
        const std::string base = "conv" + std::to_string(s + 1) + "_" +
                                 std::to_string(i + 1);
        fn(base + ".weight", weights_[conv_idx]);
        fn(base + ".bias", biases_[conv_idx]);
        ++conv_idx;
      }
  }

  std::vector<Var<T>>& weights() { return weights_; }
  std::vector<Var<T>>& biases() { return biases_; }

 private:
  BackboneConfig cfg_;
  std::vector<Var<T>> weights_;
  std::vector<Var<T>> biases_;
};

// Adds i.i.d. zero-mean Gaussian noise to every level; noise_std = 0 is the
// identity. Draws are ordered level 2..5, flat index order.
template <typename T>
FeaturePyramid<T> perturb_features(const FeaturePyramid<T>& pyr, T noise_std,
                                   Rng rng) {
  if (noise_std == T(0)) return pyr;
  check(noise_std > T(0), "perturb_features: noise_std must be >= 0");
  FeaturePyramid<T> out;
  out.provenance = pyr.provenance;
  for (int l = 0; l < 4; ++l) {
    const Var<T>& x = pyr.levels[static_cast<size_t>(l)];
    Array<T> noise(x.value().shape());
    for (int64_t i = 0; i < noise.size(); ++i)
      noise[i] = static_cast<T>(rng.normal()) * noise_std;
    out.levels[static_cast<size_t>(l)] = ops::add_array(x, noise);
  }
  return out;
}

// Float backbone checkpoint I/O (self-describing named arrays + metadata).
void save_backbone(const Backbone<float>& net, const std::string& path);
Backbone<float> load_backbone(const std::string& path);

}  // namespace recolor
