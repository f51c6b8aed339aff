// SPDX-License-Identifier: Apache-2.0

#include "recolor/backbone.hpp"

#include "recolor/serialize.hpp"

namespace recolor {

BackboneConfig BackboneConfig::toy() {
  BackboneConfig cfg;
  cfg.provenance = "toy";
  cfg.stage_channels = {8, 16, 32, 64, 64};
  cfg.stage_convs = {2, 2, 2, 2, 2};
  cfg.relu_maxpool = false;
  cfg.input_mean = {0.5f, 0.5f, 0.5f};
  cfg.input_std = {0.5f, 0.5f, 0.5f};
  return cfg;
}

BackboneConfig BackboneConfig::vgg19() {
  BackboneConfig cfg;
  cfg.provenance = "pretrained";
  cfg.stage_channels = {64, 128, 256, 512, 512};
  cfg.stage_convs = {2, 2, 4, 4, 2};  // prefix of VGG19 through conv5_2
  cfg.relu_maxpool = true;
  cfg.input_mean = {0.485f, 0.456f, 0.406f};
  cfg.input_std = {0.229f, 0.224f, 0.225f};
  return cfg;
}

void save_backbone(const Backbone<float>& net, const std::string& path) {
  NamedArrays arrays;
  const BackboneConfig& cfg = net.config();
  Array<float> mean({3}), stdv({3});
  for (int c = 0; c < 3; ++c) {
    mean[c] = cfg.input_mean[static_cast<size_t>(c)];
    stdv[c] = cfg.input_std[static_cast<size_t>(c)];
  }
  arrays.add("meta.mean", std::move(mean));
  arrays.add("meta.std", std::move(stdv));
  Array<float> channels({static_cast<int>(cfg.stage_channels.size())});
  Array<float> convs({static_cast<int>(cfg.stage_convs.size())});
  for (size_t i = 0; i < cfg.stage_channels.size(); ++i) {
    channels[static_cast<int64_t>(i)] =
        static_cast<float>(cfg.stage_channels[i]);
    convs[static_cast<int64_t>(i)] = static_cast<float>(cfg.stage_convs[i]);
  }
  arrays.add("meta.stage_channels", std::move(channels));
  arrays.add("meta.stage_convs", std::move(convs));
  arrays.add("meta.relu_maxpool",
             Array<float>::scalar(cfg.relu_maxpool ? 1.0f : 0.0f));
  arrays.add_text("meta.provenance", cfg.provenance);
  net.visit_params([&arrays](const std::string& name, const Var<float>& v) {
    arrays.add(name, v.value().clone());
  });
  save_named_arrays(arrays, path);
}

Backbone<float> load_backbone(const std::string& path) {
  const NamedArrays arrays = load_named_arrays(path);
  BackboneConfig cfg;
  const Array<float> channels = arrays.get("meta.stage_channels");
  const Array<float> convs = arrays.get("meta.stage_convs");
  check(channels.size() == convs.size() && channels.size() == 5,
        "backbone checkpoint: expected 5 stages");
  for (int64_t i = 0; i < channels.size(); ++i) {
    cfg.stage_channels.push_back(static_cast<int>(channels[i]));
    cfg.stage_convs.push_back(static_cast<int>(convs[i]));
  }
  const Array<float> mean = arrays.get("meta.mean");
  const Array<float> stdv = arrays.get("meta.std");
  for (int c = 0; c < 3; ++c) {
    cfg.input_mean[static_cast<size_t>(c)] = mean[c];
    cfg.input_std[static_cast<size_t>(c)] = stdv[c];
  }
  cfg.relu_maxpool = arrays.get("meta.relu_maxpool")[0] != 0.0f;
  const std::string* prov = arrays.find_text("meta.provenance");
  cfg.provenance = prov ? *prov : "pretrained";

  Backbone<float> net(cfg, /*seed=*/0);
  size_t conv_idx = 0;
  for (size_t s = 0; s < cfg.stage_channels.size(); ++s)
    for (int i = 0; i < cfg.stage_convs[s]; ++i) {
      const std::string base =
          "conv" + std::to_string(s + 1) + "_" + std::to_string(i + 1);
      const Array<float> w = arrays.get(base + ".weight");
      const Array<float> b = arrays.get(base + ".bias");
      check(w.same_shape(net.weights()[conv_idx].value()),
            "backbone checkpoint: shape mismatch for " + base + ".weight");
      check(b.same_shape(net.biases()[conv_idx].value()),
            "backbone checkpoint: shape mismatch for " + base + ".bias");
      net.weights()[conv_idx].value() = w.clone();
      net.biases()[conv_idx].value() = b.clone();
      ++conv_idx;
    }
  return net;
}

}  // namespace recolor
