// SPDX-License-Identifier: Apache-2.0
//
// Float network building blocks shared by the correspondence, colorization
// and discriminator nets: conv layers (optionally spectral-normalized),
// instance norm, PReLU, residual blocks and SAGAN-style self-attention.
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "recolor/ops_image.hpp"
#include "recolor/rng.hpp"

namespace recolor::nn {

using Var = recolor::Var<float>;
using ParamVisitor =
    std::function<void(const std::string&, recolor::Var<float>&)>;

inline Var kaiming_conv(int cout, int cin, int kh, int kw, Rng& rng) {
  const float std_dev =
      std::sqrt(2.0f / (static_cast<float>(cin) * kh * kw));
  return Var::leaf(Array<float>::randn({cout, cin, kh, kw}, rng, std_dev),
                   true);
}

struct Conv {
  Var w, b;
  int stride = 1;
  int pad = 1;

  Conv() = default;
  Conv(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
      : w(kaiming_conv(cout, cin, k, k, rng)),
        b(Var::leaf(Array<float>::zeros({cout}), true)),
        stride(stride_),
        pad(pad_) {}

  Var operator()(const Var& x) const {
    return ops::conv2d(x, w, b, stride, pad);
  }
  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".weight", w);
    fn(prefix + ".bias", b);
  }
};

struct InstanceNorm {
  Var gamma, beta;

  InstanceNorm() = default;
  explicit InstanceNorm(int channels)
      : gamma(Var::leaf(Array<float>::full({channels}, 1.0f), true)),
        beta(Var::leaf(Array<float>::zeros({channels}), true)) {}

  Var operator()(const Var& x) const {
    return ops::instance_norm(x, gamma, beta);
  }
  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
  }
};

struct PRelu {
  Var slope;

  PRelu() = default;
  explicit PRelu(int channels)
      : slope(Var::leaf(Array<float>::full({channels}, 0.25f), true)) {}

  Var operator()(const Var& x) const { return ops::prelu(x, slope); }
  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".slope", slope);
  }
};

// conv -> IN -> PReLU with reflective padding (correspondence-net idiom).
struct ConvInPrelu {
  Conv conv;
  InstanceNorm norm;
  PRelu act;

  ConvInPrelu() = default;
  ConvInPrelu(int cin, int cout, int stride, Rng& rng)
      : conv(cin, cout, 3, stride, 0, rng), norm(cout), act(cout) {}

  Var operator()(const Var& x) const {
    return act(norm(conv(ops::pad_reflect(x, 1))));
  }
  void visit(const std::string& prefix, const ParamVisitor& fn) {
    conv.visit(prefix + ".conv", fn);
    norm.visit(prefix + ".norm", fn);
    act.visit(prefix + ".act", fn);
  }
};

// Two 3x3 convs with instance norm, PReLU between, additive shortcut
// (1x1 projection when channel counts differ).
struct ResBlock {
  Conv conv1, conv2, proj;
  InstanceNorm norm1, norm2;
  PRelu act;
  bool has_proj = false;

  ResBlock() = default;
  ResBlock(int cin, int cout, Rng& rng)
      : conv1(cin, cout, 3, 1, 0, rng),
        conv2(cout, cout, 3, 1, 0, rng),
        norm1(cout),
        norm2(cout),
        act(cout),
        has_proj(cin != cout) {
    if (has_proj) proj = Conv(cin, cout, 1, 1, 0, rng);
  }

  Var operator()(const Var& x) const {
    Var y = act(norm1(conv1(ops::pad_reflect(x, 1))));
    y = norm2(conv2(ops::pad_reflect(y, 1)));
    return ops::add(y, has_proj ? proj(x) : x);
  }
  void visit(const std::string& prefix, const ParamVisitor& fn) {
    conv1.visit(prefix + ".conv1", fn);
    conv2.visit(prefix + ".conv2", fn);
    norm1.visit(prefix + ".norm1", fn);
    norm2.visit(prefix + ".norm2", fn);
    act.visit(prefix + ".act", fn);
    if (has_proj) proj.visit(prefix + ".proj", fn);
  }
};

// Spectrally normalized conv (Miyato power iteration). u and v are no-grad
// buffers; sigma = u^T W v joins the graph so gradients see the
// normalization. One power iteration per training forward.
struct SpectralConv {
  Var w, b;
  Array<float> u, v;
  int stride = 1;
  int pad = 1;

  SpectralConv() = default;
  SpectralConv(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
      : w(kaiming_conv(cout, cin, k, k, rng)),
        b(Var::leaf(Array<float>::zeros({cout}), true)),
        stride(stride_),
        pad(pad_) {
    const int kdim = cin * k * k;
    u = Array<float>::randn({cout}, rng);
    v = Array<float>::zeros({kdim});
    normalize(u);
    power_iterate();  // gives v a consistent starting value
  }

  static void normalize(Array<float>& x) {
    double nrm = 0.0;
    for (int64_t i = 0; i < x.size(); ++i)
      nrm += static_cast<double>(x[i]) * x[i];
    const float inv = 1.0f / static_cast<float>(std::sqrt(nrm) + 1e-12);
    for (int64_t i = 0; i < x.size(); ++i) x[i] *= inv;
  }

  void power_iterate() {
    const int cout = w.value().dim(0);
    const int kdim = static_cast<int>(w.value().size() / cout);
    const float* wm = w.value().data();
    // v = normalize(W^T u); u = normalize(W v)
    for (int j = 0; j < kdim; ++j) v[j] = 0.0f;
    for (int i = 0; i < cout; ++i) {
      const float ui = u[i];
      const float* row = wm + static_cast<int64_t>(i) * kdim;
      for (int j = 0; j < kdim; ++j) v[j] += row[j] * ui;
    }
    normalize(v);
    for (int i = 0; i < cout; ++i) {
      const float* row = wm + static_cast<int64_t>(i) * kdim;
      double acc = 0.0;
      for (int j = 0; j < kdim; ++j) acc += static_cast<double>(row[j]) * v[j];
      u[i] = static_cast<float>(acc);
    }
    normalize(u);
  }

  // sigma estimate with the current buffers (used by tests).
  float sigma_estimate() const {
    const int cout = w.value().dim(0);
    const int kdim = static_cast<int>(w.value().size() / cout);
    const float* wm = w.value().data();
    double acc = 0.0;
    for (int i = 0; i < cout; ++i) {
      const float* row = wm + static_cast<int64_t>(i) * kdim;
      double wv = 0.0;
      for (int j = 0; j < kdim; ++j) wv += static_cast<double>(row[j]) * v[j];
      acc += wv * u[i];
    }
    return static_cast<float>(acc);
  }

  Var normalized_weight(bool update) {
    if (update) power_iterate();
    const int cout = w.value().dim(0);
    const int kdim = static_cast<int>(w.value().size() / cout);
    Var w2 = ops::reshape(w, {cout, kdim});
    Var vleaf = Var::leaf(v.reshaped({kdim, 1}), false);
    Var wv = ops::matmul(w2, vleaf);                    // (cout,1)
    Var sigma = ops::sum_all(ops::mul_array(wv, u.reshaped({cout, 1})));
    return ops::div_scalar_var(w, sigma);
  }

  Var operator()(const Var& x, bool update_u) {
    return ops::conv2d(x, normalized_weight(update_u), b, stride, pad);
  }
  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".weight", w);
    fn(prefix + ".bias", b);
  }
  // u/v buffers are serialized separately (they are state, not parameters).
  void visit_buffers(
      const std::string& prefix,
      const std::function<void(const std::string&, Array<float>&)>& fn) {
    fn(prefix + ".u", u);
    fn(prefix + ".v", v);
  }
};

// Self-attention over all positions with 1x1 projections at 1/8 channel
// width and a learned scalar residual gate initialized to zero.
struct SelfAttention {
  SpectralConv f, g, h;
  Var gate;

  SelfAttention() = default;
  SelfAttention(int channels, Rng& rng)
      : f(channels, std::max(1, channels / 8), 1, 1, 0, rng),
        g(channels, std::max(1, channels / 8), 1, 1, 0, rng),
        h(channels, channels, 1, 1, 0, rng),
        gate(Var::leaf(Array<float>::zeros({1}), true)) {}

  Var operator()(const Var& x, bool update_u) {
    const int H = x.value().dim(1), W = x.value().dim(2);
    Var fq = ops::chw_to_rows(f(x, update_u));  // (N, C/8)
    Var gk = ops::chw_to_rows(g(x, update_u));
    Var hv = ops::chw_to_rows(h(x, update_u));  // (N, C)
    Var attn = ops::softmax_rows(ops::matmul(fq, gk, false, true));
    Var out = ops::rows_to_chw(ops::matmul(attn, hv), H, W);
    return ops::add(x, ops::mul_scalar_var(out, gate));
  }
  void visit(const std::string& prefix, const ParamVisitor& fn) {
    f.visit(prefix + ".f", fn);
    g.visit(prefix + ".g", fn);
    h.visit(prefix + ".h", fn);
    fn(prefix + ".gate", gate);
  }
  void visit_buffers(
      const std::string& prefix,
      const std::function<void(const std::string&, Array<float>&)>& fn) {
    f.visit_buffers(prefix + ".f", fn);
    g.visit_buffers(prefix + ".g", fn);
    h.visit_buffers(prefix + ".h", fn);
  }
};

// Crops a tensor down to (h,w) when ceil-mode strides overshoot by a pixel.
inline Var fit_to(const Var& x, int h, int w) {
  if (x.value().dim(1) == h && x.value().dim(2) == w) return x;
  check(x.value().dim(1) >= h && x.value().dim(2) >= w,
        "fit_to: tensor smaller than target");
  return ops::crop2d(x, 0, 0, h, w);
}

}  // namespace recolor::nn
