// SPDX-License-Identifier: Apache-2.0

#include "recolor/colornet.hpp"

namespace recolor {

ColorNet::ColorNet(int base_width, uint64_t seed) : base_(base_width) {
  check(base_width >= 4, "ColorNet: base width too small");
  Rng rng = Rng::fork(seed, {0x636f6c6full});  // "colo"
  const int c1 = base_, c2 = 2 * base_, c3 = 4 * base_, cb = 8 * base_;
  enc1_ = SpectralBlock(7, c1, 2, 2, rng);
  enc2_ = SpectralBlock(c1, c2, 2, 2, rng);
  enc3_ = SpectralBlock(c2, c3, 3, 2, rng);
  res1_ = BottleneckBlock(c3, cb, rng);
  res2_ = BottleneckBlock(cb, cb, rng);
  res3_ = BottleneckBlock(cb, cb, rng);
  dec7_ = SpectralBlock(cb + c3, c3, 3, 1, rng);
  dec8_ = SpectralBlock(c3 + c2, c2, 2, 1, rng);
  dec9_ = SpectralBlock(c2 + c1, c1, 2, 1, rng);
  head_ = nn::SpectralConv(c1, 2, 3, 1, 1, rng);
}

nn::Var ColorNet::forward(const nn::Var& x_l, const nn::Var& warped_ab,
                          const nn::Var& confidence, const nn::Var& prev_lab,
                          bool update_sn) {
  check(x_l.value().ndim() == 2, "ColorNet: x_l must be (H,W)");
  const int h = x_l.value().dim(0), w = x_l.value().dim(1);
  check(warped_ab.value().ndim() == 3 && warped_ab.value().dim(0) == 2 &&
            warped_ab.value().dim(1) == h && warped_ab.value().dim(2) == w,
        "ColorNet: warped_ab must be (2,H,W) at input resolution");
  check(confidence.value().ndim() == 2 && confidence.value().dim(0) == h &&
            confidence.value().dim(1) == w,
        "ColorNet: confidence must be (H,W)");
  check(prev_lab.value().ndim() == 3 && prev_lab.value().dim(0) == 3 &&
            prev_lab.value().dim(1) == h && prev_lab.value().dim(2) == w,
        "ColorNet: prev_lab must be (3,H,W)");

  nn::Var x = ops::concat_ch<float>(
      {ops::reshape(x_l, {1, h, w}), warped_ab,
       ops::reshape(confidence, {1, h, w}), prev_lab});

  nn::Var e1 = enc1_(x, update_sn);
  nn::Var e2 = enc2_(e1, update_sn);
  nn::Var e3 = enc3_(e2, update_sn);
  nn::Var y = res3_(res2_(res1_(e3, update_sn), update_sn), update_sn);

  y = dec7_(ops::concat_ch<float>({y, e3}), update_sn);
  y = ops::upsample_nearest(y, e2.value().dim(1), e2.value().dim(2));
  y = dec8_(ops::concat_ch<float>({y, e2}), update_sn);
  y = ops::upsample_nearest(y, e1.value().dim(1), e1.value().dim(2));
  y = dec9_(ops::concat_ch<float>({y, e1}), update_sn);
  y = ops::upsample_nearest(y, h, w);
  return ops::tanh(head_(y, update_sn));
}

Array<float> ColorNet::colorize(const ColorNetInput& input) {
  nn::Var ab = forward(nn::Var::leaf(input.x_l), nn::Var::leaf(input.warped_ab),
                       nn::Var::leaf(input.confidence),
                       nn::Var::leaf(input.prev_lab), /*update_sn=*/false);
  return ab.value().clone();
}

void ColorNet::visit_params(const nn::ParamVisitor& fn) {
  enc1_.visit("enc1", fn);
  enc2_.visit("enc2", fn);
  enc3_.visit("enc3", fn);
  res1_.visit("res1", fn);
  res2_.visit("res2", fn);
  res3_.visit("res3", fn);
  dec7_.visit("dec7", fn);
  dec8_.visit("dec8", fn);
  dec9_.visit("dec9", fn);
  head_.visit("head", fn);
}

void ColorNet::visit_buffers(
    const std::function<void(const std::string&, Array<float>&)>& fn) {
  enc1_.visit_buffers("enc1", fn);
  enc2_.visit_buffers("enc2", fn);
  enc3_.visit_buffers("enc3", fn);
  res1_.visit_buffers("res1", fn);
  res2_.visit_buffers("res2", fn);
  res3_.visit_buffers("res3", fn);
  dec7_.visit_buffers("dec7", fn);
  dec8_.visit_buffers("dec8", fn);
  dec9_.visit_buffers("dec9", fn);
  head_.visit_buffers("head", fn);
}

LabFrame compose_frame(const Array<float>& x_l, const Array<float>& ab) {
  return LabFrame(x_l.clone(), ab.clone());
}

}  // namespace recolor
