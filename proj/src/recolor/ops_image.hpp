// SPDX-License-Identifier: Apache-2.0
//
// Spatial ops on CHW tensors: convolution (im2col+GEMM), padding, pooling,
// instance norm, resampling, concatenation and flow warping.
#pragma once

#include "recolor/ops.hpp"

namespace recolor::ops {

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// cols is (Cin*kh*kw) x (Ho*Wo), k-major rows so the GEMM reads contiguous
// position runs. Out-of-bounds taps read zero.
template <typename T>
void im2col(const Array<T>& x, int kh, int kw, int stride, int pad, int ho,
            int wo, Array<T>& cols) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int64_t P = static_cast<int64_t>(ho) * wo;
  T* out = cols.data();
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + dy - pad;
          T* row = out + static_cast<int64_t>(oy) * wo;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < wo; ++ox) row[ox] = T(0);
            continue;
          }
          const T* src = x.data() + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + dx - pad;
            row[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
        out += P;
      }
}

template <typename T>
void col2im_add(const Array<T>& cols, int kh, int kw, int stride, int pad,
                int ho, int wo, Array<T>& gx) {
  const int C = gx.dim(0), H = gx.dim(1), W = gx.dim(2);
  const int64_t P = static_cast<int64_t>(ho) * wo;
  const T* in = cols.data();
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + dy - pad;
          if (iy < 0 || iy >= H) continue;
          const T* row = in + static_cast<int64_t>(oy) * wo;
          T* dst = gx.data() + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + dx - pad;
            if (ix >= 0 && ix < W) dst[ix] += row[ox];
          }
        }
        in += P;
      }
}

}  // namespace detail

// x: (Cin,H,W), w: (Cout,Cin,kh,kw), b: (Cout) or undefined Var for none.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride,
              int pad) {
  check(x.value().ndim() == 3 && w.value().ndim() == 4, "conv2d: shapes");
  const int Cin = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  const int Cout = w.value().dim(0), kh = w.value().dim(2),
            kw = w.value().dim(3);
  check(w.value().dim(1) == Cin, "conv2d: channel mismatch");
  const int ho = conv_out_dim(H, kh, stride, pad);
  const int wo = conv_out_dim(W, kw, stride, pad);
  check(ho > 0 && wo > 0, "conv2d: output would be empty");
  const int K = Cin * kh * kw;
  const int64_t P = static_cast<int64_t>(ho) * wo;

  auto cols = std::make_shared<Array<T>>(
      Array<T>({K, static_cast<int>(P)}));
  detail::im2col(x.value(), kh, kw, stride, pad, ho, wo, *cols);

  Array<T> out({Cout, ho, wo});
  gemm(false, false, Cout, static_cast<int>(P), K, T(1), w.value().data(), K,
       cols->data(), static_cast<int>(P), T(0), out.data(),
       static_cast<int>(P));
  const bool has_bias = b.defined();
  if (has_bias) {
    for (int co = 0; co < Cout; ++co) {
      const T bv = b.value()[co];
      T* ptr = out.data() + co * P;
      for (int64_t i = 0; i < P; ++i) ptr[i] += bv;
    }
  }

  std::vector<Var<T>> inputs = {x, w};
  if (has_bias) inputs.push_back(b);
  return make_op<T>(
      std::move(out), std::move(inputs),
      [cols, Cin, H, W, Cout, kh, kw, stride, pad, ho, wo, K, P,
       has_bias](Node<T>& n) {
        const T* gy = n.grad.data();
        if (wants(n, 1)) {  // dW = dY . cols^T
          Array<T>& gw = n.inputs[1]->ensure_grad();
          gemm(false, true, Cout, K, static_cast<int>(P), T(1), gy,
               static_cast<int>(P), cols->data(), static_cast<int>(P), T(1),
               gw.data(), K);
        }
        if (has_bias && wants(n, 2)) {
          Array<T>& gb = n.inputs[2]->ensure_grad();
          for (int co = 0; co < Cout; ++co) {
            T acc = T(0);
            const T* ptr = gy + co * P;
            for (int64_t i = 0; i < P; ++i) acc += ptr[i];
            gb[co] += acc;
          }
        }
        if (wants(n, 0)) {  // dcols = W^T . dY, then scatter
          Array<T> dcols({K, static_cast<int>(P)});
          gemm(true, false, K, static_cast<int>(P), Cout, T(1),
               n.inputs[1]->value.data(), K, gy, static_cast<int>(P), T(0),
               dcols.data(), static_cast<int>(P));
          detail::col2im_add(dcols, kh, kw, stride, pad, ho, wo,
                             n.inputs[0]->ensure_grad());
        }
      });
}

// Reflection padding (edge not repeated); requires pad < H, W.
template <typename T>
Var<T> pad_reflect(const Var<T>& x, int pad) {
  check(x.value().ndim() == 3, "pad_reflect: expects (C,H,W)");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  check(pad < H && pad < W, "pad_reflect: pad too large");
  const int Ho = H + 2 * pad, Wo = W + 2 * pad;
  auto mirror = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };
  Array<T> out({C, Ho, Wo});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < Ho; ++y) {
      const int sy = mirror(y - pad, H);
      for (int x2 = 0; x2 < Wo; ++x2)
        out.at(c, y, x2) = x.value().at(c, sy, mirror(x2 - pad, W));
    }
  return make_op<T>(std::move(out), {x}, [C, H, W, pad, Ho, Wo,
                                          mirror](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y) {
        const int sy = mirror(y - pad, H);
        for (int x2 = 0; x2 < Wo; ++x2)
          g.at(c, sy, mirror(x2 - pad, W)) += n.grad.at(c, y, x2);
      }
  });
}

template <typename T>
Var<T> crop2d(const Var<T>& x, int y0, int x0, int h, int w) {
  check(x.value().ndim() == 3, "crop2d: expects (C,H,W)");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  check(y0 >= 0 && x0 >= 0 && y0 + h <= H && x0 + w <= W, "crop2d: bounds");
  Array<T> out({C, h, w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x2 = 0; x2 < w; ++x2)
        out.at(c, y, x2) = x.value().at(c, y0 + y, x0 + x2);
  return make_op<T>(std::move(out), {x}, [C, h, w, y0, x0](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y)
        for (int x2 = 0; x2 < w; ++x2)
          g.at(c, y0 + y, x0 + x2) += n.grad.at(c, y, x2);
  });
}

// 2x2 max pooling, stride 2, floor semantics (matches the VGG layout).
template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  check(x.value().ndim() == 3, "maxpool2: expects (C,H,W)");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  const int Ho = H / 2, Wo = W / 2;
  check(Ho > 0 && Wo > 0, "maxpool2: input too small");
  Array<T> out({C, Ho, Wo});
  auto arg = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(C) * Ho * Wo);
  int64_t k = 0;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < Ho; ++y)
      for (int x2 = 0; x2 < Wo; ++x2, ++k) {
        int64_t best = (static_cast<int64_t>(c) * H + 2 * y) * W + 2 * x2;
        T bv = x.value()[best];
        const int64_t cand[3] = {best + 1, best + W, best + W + 1};
        for (int64_t idx : cand)
          if (x.value()[idx] > bv) {
            bv = x.value()[idx];
            best = idx;
          }
        out[k] = bv;
        (*arg)[k] = best;
      }
  return make_op<T>(std::move(out), {x}, [arg](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (size_t i = 0; i < arg->size(); ++i) g[(*arg)[i]] += n.grad[i];
  });
}

// 2x2 average pooling, stride 2, floor semantics.
template <typename T>
Var<T> avgpool2(const Var<T>& x) {
  check(x.value().ndim() == 3, "avgpool2: expects (C,H,W)");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  const int Ho = H / 2, Wo = W / 2;
  check(Ho > 0 && Wo > 0, "avgpool2: input too small");
  Array<T> out({C, Ho, Wo});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < Ho; ++y)
      for (int x2 = 0; x2 < Wo; ++x2) {
        const T* p = x.value().data() +
                     (static_cast<int64_t>(c) * H + 2 * y) * W + 2 * x2;
        out.at(c, y, x2) = (p[0] + p[1] + p[W] + p[W + 1]) * T(0.25);
      }
  return make_op<T>(std::move(out), {x}, [C, H, W, Ho, Wo](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y)
        for (int x2 = 0; x2 < Wo; ++x2) {
          const T gv = n.grad.at(c, y, x2) * T(0.25);
          T* p = g.data() + (static_cast<int64_t>(c) * H + 2 * y) * W + 2 * x2;
          p[0] += gv;
          p[1] += gv;
          p[W] += gv;
          p[W + 1] += gv;
        }
  });
}

// Global average pool: (C,H,W) -> (C).
template <typename T>
Var<T> avgpool_global(const Var<T>& x) {
  check(x.value().ndim() == 3, "avgpool_global: expects (C,H,W)");
  const int C = x.value().dim(0);
  const int64_t plane =
      static_cast<int64_t>(x.value().dim(1)) * x.value().dim(2);
  Array<T> out({C});
  const T inv = T(1) / static_cast<T>(plane);
  for (int c = 0; c < C; ++c) {
    T acc = T(0);
    const T* p = x.value().data() + c * plane;
    for (int64_t i = 0; i < plane; ++i) acc += p[i];
    out[c] = acc * inv;
  }
  return make_op<T>(std::move(out), {x}, [C, plane, inv](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c) {
      const T gv = n.grad[c] * inv;
      T* p = g.data() + c * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += gv;
    }
  });
}

// Per-channel instance normalization with affine parameters.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                     T eps = T(1e-5)) {
  check(x.value().ndim() == 3, "instance_norm: expects (C,H,W)");
  const int C = x.value().dim(0);
  const int64_t plane =
      static_cast<int64_t>(x.value().dim(1)) * x.value().dim(2);
  check(gamma.value().size() == C && beta.value().size() == C,
        "instance_norm: affine shape");
  Array<T> out(x.value().shape());
  auto mu = std::make_shared<std::vector<T>>(C);
  auto istd = std::make_shared<std::vector<T>>(C);
  for (int c = 0; c < C; ++c) {
    const T* p = x.value().data() + c * plane;
    T m = T(0);
    for (int64_t i = 0; i < plane; ++i) m += p[i];
    m /= static_cast<T>(plane);
    T v = T(0);
    for (int64_t i = 0; i < plane; ++i) {
      const T d = p[i] - m;
      v += d * d;
    }
    v /= static_cast<T>(plane);
    const T is = T(1) / std::sqrt(v + eps);
    (*mu)[c] = m;
    (*istd)[c] = is;
    const T g = gamma.value()[c], b = beta.value()[c];
    T* o = out.data() + c * plane;
    for (int64_t i = 0; i < plane; ++i) o[i] = (p[i] - m) * is * g + b;
  }
  return make_op<T>(std::move(out), {x, gamma, beta},
                    [C, plane, mu, istd](Node<T>& n) {
    const Array<T>& vx = n.inputs[0]->value;
    const Array<T>& vgamma = n.inputs[1]->value;
    for (int c = 0; c < C; ++c) {
      const T* p = vx.data() + c * plane;
      const T* gy = n.grad.data() + c * plane;
      const T m = (*mu)[c], is = (*istd)[c];
      T sum_gy = T(0), sum_gy_xhat = T(0);
      for (int64_t i = 0; i < plane; ++i) {
        sum_gy += gy[i];
        sum_gy_xhat += gy[i] * (p[i] - m) * is;
      }
      if (wants(n, 1)) n.inputs[1]->ensure_grad()[c] += sum_gy_xhat;
      if (wants(n, 2)) n.inputs[2]->ensure_grad()[c] += sum_gy;
      if (wants(n, 0)) {
        T* gx = n.inputs[0]->ensure_grad().data() + c * plane;
        const T g = vgamma[c];
        const T inv_n = T(1) / static_cast<T>(plane);
        for (int64_t i = 0; i < plane; ++i) {
          const T xhat = (p[i] - m) * is;
          gx[i] += g * is *
                   (gy[i] - inv_n * sum_gy - xhat * inv_n * sum_gy_xhat);
        }
      }
    }
  });
}

// Nearest-neighbor resample to (ho, wo).
template <typename T>
Var<T> upsample_nearest(const Var<T>& x, int ho, int wo) {
  check(x.value().ndim() == 3, "upsample_nearest: expects (C,H,W)");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  Array<T> out({C, ho, wo});
  std::vector<int> sy(ho), sx(wo);
  for (int y = 0; y < ho; ++y)
    sy[y] = std::min(H - 1, static_cast<int>(static_cast<int64_t>(y) * H / ho));
  for (int x2 = 0; x2 < wo; ++x2)
    sx[x2] =
        std::min(W - 1, static_cast<int>(static_cast<int64_t>(x2) * W / wo));
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < ho; ++y)
      for (int x2 = 0; x2 < wo; ++x2)
        out.at(c, y, x2) = x.value().at(c, sy[y], sx[x2]);
  auto msy = std::make_shared<std::vector<int>>(std::move(sy));
  auto msx = std::make_shared<std::vector<int>>(std::move(sx));
  return make_op<T>(std::move(out), {x}, [C, ho, wo, msy, msx](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < ho; ++y)
        for (int x2 = 0; x2 < wo; ++x2)
          g.at(c, (*msy)[y], (*msx)[x2]) += n.grad.at(c, y, x2);
  });
}

// Bilinear resample to (ho, wo), half-pixel centers, clamped borders.
template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int ho, int wo) {
  check(x.value().ndim() == 3, "upsample_bilinear: expects (C,H,W)");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  struct Tap {
    int i0, i1;
    T w1;
  };
  auto make_taps = [](int out_n, int in_n) {
    std::vector<Tap> taps(out_n);
    for (int i = 0; i < out_n; ++i) {
      T src = (static_cast<T>(i) + T(0.5)) * static_cast<T>(in_n) /
                  static_cast<T>(out_n) -
              T(0.5);
      src = std::max(T(0), std::min(src, static_cast<T>(in_n - 1)));
      const int i0 = std::min(static_cast<int>(src), in_n - 1);
      const int i1 = std::min(i0 + 1, in_n - 1);
      taps[i] = {i0, i1, src - static_cast<T>(i0)};
    }
    return taps;
  };
  auto ty = std::make_shared<std::vector<Tap>>(make_taps(ho, H));
  auto tx = std::make_shared<std::vector<Tap>>(make_taps(wo, W));
  Array<T> out({C, ho, wo});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < ho; ++y) {
      const Tap& a = (*ty)[y];
      for (int x2 = 0; x2 < wo; ++x2) {
        const Tap& b = (*tx)[x2];
        const T v00 = x.value().at(c, a.i0, b.i0);
        const T v01 = x.value().at(c, a.i0, b.i1);
        const T v10 = x.value().at(c, a.i1, b.i0);
        const T v11 = x.value().at(c, a.i1, b.i1);
        out.at(c, y, x2) = (T(1) - a.w1) * ((T(1) - b.w1) * v00 + b.w1 * v01) +
                           a.w1 * ((T(1) - b.w1) * v10 + b.w1 * v11);
      }
    }
  return make_op<T>(std::move(out), {x}, [C, ho, wo, ty, tx](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < ho; ++y) {
        const Tap& a = (*ty)[y];
        for (int x2 = 0; x2 < wo; ++x2) {
          const Tap& b = (*tx)[x2];
          const T gv = n.grad.at(c, y, x2);
          g.at(c, a.i0, b.i0) += gv * (T(1) - a.w1) * (T(1) - b.w1);
          g.at(c, a.i0, b.i1) += gv * (T(1) - a.w1) * b.w1;
          g.at(c, a.i1, b.i0) += gv * a.w1 * (T(1) - b.w1);
          g.at(c, a.i1, b.i1) += gv * a.w1 * b.w1;
        }
      }
  });
}

// Channel concatenation of CHW tensors with equal spatial size.
template <typename T>
Var<T> concat_ch(const std::vector<Var<T>>& xs) {
  check(!xs.empty(), "concat_ch: empty");
  const int H = xs[0].value().dim(1), W = xs[0].value().dim(2);
  int C = 0;
  for (const auto& v : xs) {
    check(v.value().ndim() == 3 && v.value().dim(1) == H &&
              v.value().dim(2) == W,
          "concat_ch: spatial mismatch");
    C += v.value().dim(0);
  }
  Array<T> out({C, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  int64_t off = 0;
  for (const auto& v : xs) {
    const int64_t sz = v.value().size();
    const T* p = v.value().data();
    T* o = out.data() + off;
    for (int64_t i = 0; i < sz; ++i) o[i] = p[i];
    off += sz;
  }
  (void)plane;
  return make_op<T>(std::move(out), xs, [](Node<T>& n) {
    int64_t off = 0;
    for (size_t s = 0; s < n.inputs.size(); ++s) {
      const int64_t sz = n.inputs[s]->value.size();
      if (wants(n, s)) {
        Array<T>& g = n.inputs[s]->ensure_grad();
        const T* src = n.grad.data() + off;
        for (int64_t i = 0; i < sz; ++i) g[i] += src[i];
      }
      off += sz;
    }
  });
}

// Warp a CHW frame by a constant flow field (2,H,W): output(p) samples the
// frame at p - flow(p) (backward-mapped coordinates), bilinear, borders
// clamped. Differentiable in the frame values only.
template <typename T>
Var<T> warp_backward(const Var<T>& frame, const Array<T>& flow) {
  check(frame.value().ndim() == 3, "warp_backward: expects (C,H,W)");
  const int C = frame.value().dim(0), H = frame.value().dim(1),
            W = frame.value().dim(2);
  check(flow.ndim() == 3 && flow.dim(0) == 2 && flow.dim(1) == H &&
            flow.dim(2) == W,
        "warp_backward: flow shape");
  struct Tap {
    int x0, y0;
    T wx, wy;
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      T sx = static_cast<T>(x) - flow.at(0, y, x);
      T sy = static_cast<T>(y) - flow.at(1, y, x);
      sx = std::max(T(0), std::min(sx, static_cast<T>(W - 1)));
      sy = std::max(T(0), std::min(sy, static_cast<T>(H - 1)));
      const int x0 = std::min(static_cast<int>(sx), W - 1);
      const int y0 = std::min(static_cast<int>(sy), H - 1);
      (*taps)[static_cast<size_t>(y) * W + x] = {
          x0, y0, sx - static_cast<T>(x0), sy - static_cast<T>(y0)};
    }
  Array<T> out({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Tap& t = (*taps)[static_cast<size_t>(y) * W + x];
        const int x1 = std::min(t.x0 + 1, W - 1);
        const int y1 = std::min(t.y0 + 1, H - 1);
        const T v00 = frame.value().at(c, t.y0, t.x0);
        const T v01 = frame.value().at(c, t.y0, x1);
        const T v10 = frame.value().at(c, y1, t.x0);
        const T v11 = frame.value().at(c, y1, x1);
        out.at(c, y, x) = (T(1) - t.wy) * ((T(1) - t.wx) * v00 + t.wx * v01) +
                          t.wy * ((T(1) - t.wx) * v10 + t.wx * v11);
      }
  return make_op<T>(std::move(out), {frame}, [C, H, W, taps](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const Tap& t = (*taps)[static_cast<size_t>(y) * W + x];
          const int x1 = std::min(t.x0 + 1, W - 1);
          const int y1 = std::min(t.y0 + 1, H - 1);
          const T gv = n.grad.at(c, y, x);
          g.at(c, t.y0, t.x0) += gv * (T(1) - t.wy) * (T(1) - t.wx);
          g.at(c, t.y0, x1) += gv * (T(1) - t.wy) * t.wx;
          g.at(c, y1, t.x0) += gv * t.wy * (T(1) - t.wx);
          g.at(c, y1, x1) += gv * t.wy * t.wx;
        }
  });
}

// (C,H,W) -> (H*W, C) position-major feature rows.
template <typename T>
Var<T> chw_to_rows(const Var<T>& x) {
  check(x.value().ndim() == 3, "chw_to_rows: expects (C,H,W)");
  const int C = x.value().dim(0);
  const int64_t P = static_cast<int64_t>(x.value().dim(1)) * x.value().dim(2);
  Array<T> out({static_cast<int>(P), C});
  const T* px = x.value().data();
  for (int c = 0; c < C; ++c)
    for (int64_t p = 0; p < P; ++p) out[p * C + c] = px[c * P + p];
  return make_op<T>(std::move(out), {x}, [C, P](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int64_t p = 0; p < P; ++p) g[c * P + p] += n.grad[p * C + c];
  });
}

// (H*W, C) -> (C,H,W).
template <typename T>
Var<T> rows_to_chw(const Var<T>& x, int h, int w) {
  check(x.value().ndim() == 2 &&
            x.value().dim(0) == h * w,
        "rows_to_chw: row count must equal h*w");
  const int C = x.value().dim(1);
  const int64_t P = static_cast<int64_t>(h) * w;
  Array<T> out({C, h, w});
  const T* px = x.value().data();
  for (int c = 0; c < C; ++c)
    for (int64_t p = 0; p < P; ++p) out[c * P + p] = px[p * C + c];
  return make_op<T>(std::move(out), {x}, [C, P](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int64_t p = 0; p < P; ++p) g[p * C + c] += n.grad[c * P + p];
  });
}

// y_c = (x_c - shift[c]) * scale[c] with constant per-channel vectors.
template <typename T>
Var<T> channel_affine(const Var<T>& x, const Array<T>& shift,
                      const Array<T>& scale_v) {
  check(x.value().ndim() == 3 && shift.size() == x.value().dim(0) &&
            scale_v.size() == x.value().dim(0),
        "channel_affine: shapes");
  const int C = x.value().dim(0);
  const int64_t plane =
      static_cast<int64_t>(x.value().dim(1)) * x.value().dim(2);
  Array<T> out(x.value().shape());
  for (int c = 0; c < C; ++c) {
    const T sh = shift[c], sc = scale_v[c];
    const T* p = x.value().data() + c * plane;
    T* o = out.data() + c * plane;
    for (int64_t i = 0; i < plane; ++i) o[i] = (p[i] - sh) * sc;
  }
  Array<T> sc_copy = scale_v;
  return make_op<T>(std::move(out), {x}, [C, plane, sc_copy](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c) {
      const T sc = sc_copy[c];
      T* gp = g.data() + c * plane;
      const T* gy = n.grad.data() + c * plane;
      for (int64_t i = 0; i < plane; ++i) gp[i] += gy[i] * sc;
    }
  });
}

// y_d = sum_c M[d,c] x_c with a constant (D x C) matrix; used for the fixed
// color-space transforms.
template <typename T>
Var<T> channel_matrix(const Var<T>& x, const Array<T>& m) {
  check(x.value().ndim() == 3 && m.ndim() == 2 &&
            m.dim(1) == x.value().dim(0),
        "channel_matrix: shapes");
  const int C = x.value().dim(0), D = m.dim(0);
  const int64_t plane =
      static_cast<int64_t>(x.value().dim(1)) * x.value().dim(2);
  Array<T> out({D, x.value().dim(1), x.value().dim(2)});
  for (int d = 0; d < D; ++d) {
    T* o = out.data() + d * plane;
    for (int c = 0; c < C; ++c) {
      const T w = m[static_cast<int64_t>(d) * C + c];
      const T* p = x.value().data() + c * plane;
      for (int64_t i = 0; i < plane; ++i) o[i] += w * p[i];
    }
  }
  Array<T> mm = m;
  return make_op<T>(std::move(out), {x}, [C, D, plane, mm](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int c = 0; c < C; ++c) {
      T* gc = g.data() + c * plane;
      for (int d = 0; d < D; ++d) {
        const T w = mm[static_cast<int64_t>(d) * C + c];
        const T* gd = n.grad.data() + d * plane;
        for (int64_t i = 0; i < plane; ++i) gc[i] += w * gd[i];
      }
    }
  });
}

}  // namespace recolor::ops
