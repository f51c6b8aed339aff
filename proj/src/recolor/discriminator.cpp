// SPDX-License-Identifier: Apache-2.0

#include "recolor/discriminator.hpp"

namespace recolor {

Array<float> FramePair::stacked() const {
  prev.validate();
  cur.validate();
  check(prev.height() == cur.height() && prev.width() == cur.width(),
        "FramePair: frames must share dimensions");
  const int h = prev.height(), w = prev.width();
  Array<float> out({6, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    out[i] = prev.l[i];
    out[plane + i] = prev.ab[i];
    out[2 * plane + i] = prev.ab[plane + i];
    out[3 * plane + i] = cur.l[i];
    out[4 * plane + i] = cur.ab[i];
    out[5 * plane + i] = cur.ab[plane + i];
  }
  return out;
}

Discriminator::Discriminator(int base_width, uint64_t seed)
    : base_(base_width) {
  check(base_width >= 4, "Discriminator: base width too small");
  Rng rng = Rng::fork(seed, {0x64697363ull});  // "disc"
  const int widths[6] = {base_,     base_,     2 * base_,
                         4 * base_, 8 * base_, 16 * base_};
  int cin = 6;
  for (int i = 0; i < 6; ++i) {
    convs_.emplace_back(cin, widths[i], 4, 2, 1, rng);
    cin = widths[i];
  }
  attn_ = nn::SelfAttention(widths[0], rng);
  head_ = nn::SpectralConv(cin, 1, 3, 1, 1, rng);
}

nn::Var Discriminator::score(const nn::Var& x, bool update_sn) {
  check(x.value().ndim() == 3 && x.value().dim(0) == 6,
        "Discriminator: expects (6,H,W)");
  const int h = x.value().dim(1), w = x.value().dim(2);
  check(h % 64 == 0 && w % 64 == 0,
        "Discriminator: H and W must be divisible by 64, got " +
            std::to_string(h) + "x" + std::to_string(w));
  nn::Var y = ops::leaky_relu(convs_[0](x, update_sn), 0.2f);
  y = attn_(y, update_sn);
  for (size_t i = 1; i < convs_.size(); ++i)
    y = ops::leaky_relu(convs_[i](y, update_sn), 0.2f);
  y = head_(y, update_sn);
  return ops::mean_all(y);
}

std::vector<double> Discriminator::discriminate(
    const std::vector<FramePair>& batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const FramePair& pair : batch) {
    nn::Var s = score(nn::Var::leaf(pair.stacked(), false),
                      /*update_sn=*/false);
    out.push_back(static_cast<double>(s.item()));
  }
  return out;
}

void Discriminator::visit_params(const nn::ParamVisitor& fn) {
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].visit("conv" + std::to_string(i), fn);
  attn_.visit("attn", fn);
  head_.visit("head", fn);
}

void Discriminator::visit_buffers(
    const std::function<void(const std::string&, Array<float>&)>& fn) {
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].visit_buffers("conv" + std::to_string(i), fn);
  attn_.visit_buffers("attn", fn);
  head_.visit_buffers("head", fn);
}

float Discriminator::max_normalized_sigma() {
  float worst = 0.0f;
  auto probe = [&worst](nn::SpectralConv& conv) {
    // Power-iterate on the normalized weight a few times for an estimate.
    const float sigma = conv.sigma_estimate();
    nn::SpectralConv tmp = conv;
    for (int i = 0; i < 8; ++i) tmp.power_iterate();
    const float raw = tmp.sigma_estimate();
    worst = std::max(worst, sigma > 0.0f ? raw / sigma : 0.0f);
  };
  for (auto& c : convs_) probe(c);
  probe(head_);
  probe(attn_.f);
  probe(attn_.g);
  probe(attn_.h);
  return worst;
}

}  // namespace recolor
