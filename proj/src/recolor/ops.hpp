// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. Image tensors are CHW; feature grids are
// (positions x channels). Convolutions and matrix products route through
// the dispatched GEMM; everything else is plain loops.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "recolor/autograd.hpp"
#include "simd/gemm.hpp"

namespace recolor::ops {

// ---- GEMM shim (float -> dispatched sgemm, double -> scalar dgemm) ----
inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  simd::sgemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  simd::dgemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
bool wants(const Node<T>& n, size_t i) {
  return n.inputs[i]->requires_grad;
}

// ---------------- elementwise ----------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check(a.value().same_shape(b.value()), "add: shape mismatch");
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (int s = 0; s < 2; ++s)
      if (wants(n, s)) {
        Array<T>& g = n.inputs[s]->ensure_grad();
        for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check(a.value().same_shape(b.value()), "sub: shape mismatch");
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (wants(n, 0)) {
      Array<T>& g = n.inputs[0]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      Array<T>& g = n.inputs[1]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check(a.value().same_shape(b.value()), "mul: shape mismatch");
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const Array<T>& va = n.inputs[0]->value;
    const Array<T>& vb = n.inputs[1]->value;
    if (wants(n, 0)) {
      Array<T>& g = n.inputs[0]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * vb[i];
    }
    if (wants(n, 1)) {
      Array<T>& g = n.inputs[1]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * va[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] * c;
  return make_op<T>(std::move(out), {a}, [c](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
  });
}

template <typename T>
Var<T> add_const(const Var<T>& a, T c) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] + c;
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

// Elementwise product with a constant array (masks, fixed fields).
template <typename T>
Var<T> mul_array(const Var<T>& a, const Array<T>& c) {
  check(a.value().same_shape(c), "mul_array: shape mismatch");
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] * c[i];
  Array<T> cc = c;
  return make_op<T>(std::move(out), {a}, [cc](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * cc[i];
  });
}

// Adds a constant array (noise fields, precomputed offsets).
template <typename T>
Var<T> add_array(const Var<T>& a, const Array<T>& c) {
  check(a.value().same_shape(c), "add_array: shape mismatch");
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] + c[i];
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(pa[i]);
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] * (v[i] > T(0) ? T(1) : v[i] < T(0) ? T(-1) : T(0));
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pa[i];
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * T(2) * v[i];
  });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(pa[i]);
  Array<T> saved = out;
  return make_op<T>(std::move(out), {a}, [saved](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] / (T(2) * std::max(saved[i], T(1e-20)));
  });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(pa[i]);
  Array<T> saved = out;
  return make_op<T>(std::move(out), {a}, [saved](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * saved[i];
  });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(pa[i]);
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / v[i];
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(pa[i]);
  Array<T> saved = out;
  return make_op<T>(std::move(out), {a}, [saved](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] * (T(1) - saved[i] * saved[i]);
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = pa[i] > T(0) ? pa[i] : T(0);
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      if (v[i] > T(0)) g[i] += n.grad[i];
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = pa[i] > T(0) ? pa[i] : slope * pa[i];
  return make_op<T>(std::move(out), {a}, [slope](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] * (v[i] > T(0) ? T(1) : slope);
  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i) {
    const T x = pa[i];
    out[i] = x > T(20) ? x : std::log1p(std::exp(x));
  }
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] / (T(1) + std::exp(-v[i]));
  });
}

// x: (C,H,W), slope: (C). PReLU with one learned slope per channel.
template <typename T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  check(x.value().ndim() == 3 && slope.value().ndim() == 1 &&
            slope.value().dim(0) == x.value().dim(0),
        "prelu: expects (C,H,W) and (C)");
  const int C = x.value().dim(0);
  const int64_t plane = static_cast<int64_t>(x.value().dim(1)) * x.value().dim(2);
  Array<T> out(x.value().shape());
  for (int c = 0; c < C; ++c) {
    const T a = slope.value()[c];
    const T* px = x.value().data() + c * plane;
    T* po = out.data() + c * plane;
    for (int64_t i = 0; i < plane; ++i)
      po[i] = px[i] > T(0) ? px[i] : a * px[i];
  }
  return make_op<T>(std::move(out), {x, slope}, [C, plane](Node<T>& n) {
    const Array<T>& v = n.inputs[0]->value;
    const Array<T>& a = n.inputs[1]->value;
    for (int c = 0; c < C; ++c) {
      const T* pv = v.data() + c * plane;
      const T* pg = n.grad.data() + c * plane;
      if (wants(n, 0)) {
        T* gx = n.inputs[0]->ensure_grad().data() + c * plane;
        for (int64_t i = 0; i < plane; ++i)
          gx[i] += pg[i] * (pv[i] > T(0) ? T(1) : a[c]);
      }
      if (wants(n, 1)) {
        T acc = T(0);
        for (int64_t i = 0; i < plane; ++i)
          if (pv[i] <= T(0)) acc += pg[i] * pv[i];
        n.inputs[1]->ensure_grad()[c] += acc;
      }
    }
  });
}

// Gradient passes only strictly inside the interval.
template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Array<T> out(a.value().shape());
  const T* pa = a.value().data();
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = std::min(hi, std::max(lo, pa[i]));
  return make_op<T>(std::move(out), {a}, [lo, hi](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      if (v[i] > lo && v[i] < hi) g[i] += n.grad[i];
  });
}

// ---------------- reductions & broadcasting ----------------

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T s = T(0);
  const T* pa = a.value().data();
  for (int64_t i = 0; i < a.value().size(); ++i) s += pa[i];
  return make_op<T>(Array<T>::scalar(s), {a}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    const T gv = n.grad[0];
    for (int64_t i = 0; i < g.size(); ++i) g[i] += gv;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const int64_t count = a.value().size();
  check(count > 0, "mean_all: empty tensor");
  return scale(sum_all(a), T(1) / static_cast<T>(count));
}

// x: (N,C) -> (C), mean over rows.
template <typename T>
Var<T> mean_over_rows(const Var<T>& x) {
  check(x.value().ndim() == 2, "mean_over_rows: expects (N,C)");
  const int N = x.value().dim(0), C = x.value().dim(1);
  Array<T> out({C});
  const T* px = x.value().data();
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < C; ++c) out[c] += px[static_cast<int64_t>(i) * C + c];
  const T inv = T(1) / static_cast<T>(N);
  for (int c = 0; c < C; ++c) out[c] *= inv;
  return make_op<T>(std::move(out), {x}, [N, C, inv](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < C; ++c)
        g[static_cast<int64_t>(i) * C + c] += n.grad[c] * inv;
  });
}

// x: (N,C) minus a (C) row vector broadcast over rows.
template <typename T>
Var<T> sub_rowvec(const Var<T>& x, const Var<T>& v) {
  check(x.value().ndim() == 2 && v.value().ndim() == 1 &&
            v.value().dim(0) == x.value().dim(1),
        "sub_rowvec: shapes");
  const int N = x.value().dim(0), C = x.value().dim(1);
  Array<T> out(x.value().shape());
  const T* px = x.value().data();
  const T* pv = v.value().data();
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < C; ++c) {
      const int64_t k = static_cast<int64_t>(i) * C + c;
      out[k] = px[k] - pv[c];
    }
  return make_op<T>(std::move(out), {x, v}, [N, C](Node<T>& n) {
    if (wants(n, 0)) {
      Array<T>& g = n.inputs[0]->ensure_grad();
      for (int64_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
    if (wants(n, 1)) {
      Array<T>& g = n.inputs[1]->ensure_grad();
      for (int i = 0; i < N; ++i)
        for (int c = 0; c < C; ++c)
          g[c] -= n.grad[static_cast<int64_t>(i) * C + c];
    }
  });
}

// x: (N,M) divided per-row by d: (N).
template <typename T>
Var<T> div_colvec(const Var<T>& x, const Var<T>& d) {
  check(x.value().ndim() == 2 && d.value().ndim() == 1 &&
            d.value().dim(0) == x.value().dim(0),
        "div_colvec: shapes");
  const int N = x.value().dim(0), M = x.value().dim(1);
  Array<T> out(x.value().shape());
  const T* px = x.value().data();
  const T* pd = d.value().data();
  for (int i = 0; i < N; ++i) {
    const T inv = T(1) / pd[i];
    for (int j = 0; j < M; ++j) {
      const int64_t k = static_cast<int64_t>(i) * M + j;
      out[k] = px[k] * inv;
    }
  }
  return make_op<T>(std::move(out), {x, d}, [N, M](Node<T>& n) {
    const Array<T>& vx = n.inputs[0]->value;
    const Array<T>& vd = n.inputs[1]->value;
    if (wants(n, 0)) {
      Array<T>& g = n.inputs[0]->ensure_grad();
      for (int i = 0; i < N; ++i) {
        const T inv = T(1) / vd[i];
        for (int j = 0; j < M; ++j) {
          const int64_t k = static_cast<int64_t>(i) * M + j;
          g[k] += n.grad[k] * inv;
        }
      }
    }
    if (wants(n, 1)) {
      Array<T>& g = n.inputs[1]->ensure_grad();
      for (int i = 0; i < N; ++i) {
        T acc = T(0);
        const T inv2 = T(1) / (vd[i] * vd[i]);
        for (int j = 0; j < M; ++j) {
          const int64_t k = static_cast<int64_t>(i) * M + j;
          acc -= n.grad[k] * vx[k] * inv2;
        }
        g[i] += acc;
      }
    }
  });
}

// Row-wise sum of squares: (N,M) -> (N).
template <typename T>
Var<T> row_sumsq(const Var<T>& x) {
  check(x.value().ndim() == 2, "row_sumsq: expects (N,M)");
  const int N = x.value().dim(0), M = x.value().dim(1);
  Array<T> out({N});
  const T* px = x.value().data();
  for (int i = 0; i < N; ++i) {
    T acc = T(0);
    for (int j = 0; j < M; ++j) {
      const T v = px[static_cast<int64_t>(i) * M + j];
      acc += v * v;
    }
    out[i] = acc;
  }
  return make_op<T>(std::move(out), {x}, [N, M](Node<T>& n) {
    if (!wants(n, 0)) return;
    const Array<T>& v = n.inputs[0]->value;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int i = 0; i < N; ++i) {
      const T gi = T(2) * n.grad[i];
      for (int j = 0; j < M; ++j) {
        const int64_t k = static_cast<int64_t>(i) * M + j;
        g[k] += gi * v[k];
      }
    }
  });
}

template <typename T>
Var<T> row_max(const Var<T>& x) {
  check(x.value().ndim() == 2, "row_max: expects (N,M)");
  const int N = x.value().dim(0), M = x.value().dim(1);
  Array<T> out({N});
  auto arg = std::make_shared<std::vector<int>>(N);
  const T* px = x.value().data();
  for (int i = 0; i < N; ++i) {
    const T* row = px + static_cast<int64_t>(i) * M;
    int best = 0;
    for (int j = 1; j < M; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = row[best];
    (*arg)[i] = best;
  }
  return make_op<T>(std::move(out), {x}, [arg, M](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (size_t i = 0; i < arg->size(); ++i)
      g[static_cast<int64_t>(i) * M + (*arg)[i]] += n.grad[i];
  });
}

template <typename T>
Var<T> row_min(const Var<T>& x) {
  check(x.value().ndim() == 2, "row_min: expects (N,M)");
  const int N = x.value().dim(0), M = x.value().dim(1);
  Array<T> out({N});
  auto arg = std::make_shared<std::vector<int>>(N);
  const T* px = x.value().data();
  for (int i = 0; i < N; ++i) {
    const T* row = px + static_cast<int64_t>(i) * M;
    int best = 0;
    for (int j = 1; j < M; ++j)
      if (row[j] < row[best]) best = j;
    out[i] = row[best];
    (*arg)[i] = best;
  }
  return make_op<T>(std::move(out), {x}, [arg, M](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (size_t i = 0; i < arg->size(); ++i)
      g[static_cast<int64_t>(i) * M + (*arg)[i]] += n.grad[i];
  });
}

// Stacks k scalar Vars into a (k) vector (discriminator score batches).
template <typename T>
Var<T> stack_scalars(const std::vector<Var<T>>& xs) {
  check(!xs.empty(), "stack_scalars: empty");
  Array<T> out({static_cast<int>(xs.size())});
  for (size_t i = 0; i < xs.size(); ++i) {
    check(xs[i].value().size() == 1, "stack_scalars: non-scalar element");
    out[i] = xs[i].value()[0];
  }
  return make_op<T>(std::move(out), xs, [](Node<T>& n) {
    for (size_t i = 0; i < n.inputs.size(); ++i)
      if (wants(n, i)) n.inputs[i]->ensure_grad()[0] += n.grad[i];
  });
}

// x - s with scalar Var s broadcast.
template <typename T>
Var<T> sub_scalar_var(const Var<T>& x, const Var<T>& s) {
  check(s.value().size() == 1, "sub_scalar_var: s must be scalar");
  Array<T> out(x.value().shape());
  const T sv = s.value()[0];
  const T* px = x.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = px[i] - sv;
  return make_op<T>(std::move(out), {x, s}, [](Node<T>& n) {
    if (wants(n, 0)) {
      Array<T>& g = n.inputs[0]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      T acc = T(0);
      for (int64_t i = 0; i < n.grad.size(); ++i) acc -= n.grad[i];
      n.inputs[1]->ensure_grad()[0] += acc;
    }
  });
}

// x * s with scalar Var s broadcast.
template <typename T>
Var<T> mul_scalar_var(const Var<T>& x, const Var<T>& s) {
  check(s.value().size() == 1, "mul_scalar_var: s must be scalar");
  Array<T> out(x.value().shape());
  const T sv = s.value()[0];
  const T* px = x.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = px[i] * sv;
  return make_op<T>(std::move(out), {x, s}, [](Node<T>& n) {
    const T sv = n.inputs[1]->value[0];
    const Array<T>& vx = n.inputs[0]->value;
    if (wants(n, 0)) {
      Array<T>& g = n.inputs[0]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * sv;
    }
    if (wants(n, 1)) {
      T acc = T(0);
      for (int64_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * vx[i];
      n.inputs[1]->ensure_grad()[0] += acc;
    }
  });
}

// x / s with scalar Var s broadcast.
template <typename T>
Var<T> div_scalar_var(const Var<T>& x, const Var<T>& s) {
  check(s.value().size() == 1, "div_scalar_var: s must be scalar");
  Array<T> out(x.value().shape());
  const T sv = s.value()[0];
  const T* px = x.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = px[i] / sv;
  return make_op<T>(std::move(out), {x, s}, [](Node<T>& n) {
    const T sv = n.inputs[1]->value[0];
    const Array<T>& vx = n.inputs[0]->value;
    if (wants(n, 0)) {
      Array<T>& g = n.inputs[0]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / sv;
    }
    if (wants(n, 1)) {
      T acc = T(0);
      for (int64_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * vx[i];
      n.inputs[1]->ensure_grad()[0] -= acc / (sv * sv);
    }
  });
}

// ---------------- matrix products ----------------

// C (m x n) = op(A) . op(B).
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false,
              bool tb = false) {
  check(a.value().ndim() == 2 && b.value().ndim() == 2, "matmul: 2-d only");
  const int m = ta ? a.value().dim(1) : a.value().dim(0);
  const int ka = ta ? a.value().dim(0) : a.value().dim(1);
  const int kb = tb ? b.value().dim(1) : b.value().dim(0);
  const int n = tb ? b.value().dim(0) : b.value().dim(1);
  check(ka == kb, "matmul: inner dimensions disagree");
  const int lda = a.value().dim(1), ldb = b.value().dim(1);
  Array<T> out({m, n});
  gemm(ta, tb, m, n, ka, T(1), a.value().data(), lda, b.value().data(), ldb,
       T(0), out.data(), n);
  return make_op<T>(std::move(out), {a, b},
                    [m, n, ka, ta, tb, lda, ldb](Node<T>& n_) {
    const T* gv = n_.grad.data();
    const Array<T>& va = n_.inputs[0]->value;
    const Array<T>& vb = n_.inputs[1]->value;
    if (wants(n_, 0)) {
      Array<T>& ga = n_.inputs[0]->ensure_grad();
      if (!ta)  // dA = dC . op(B)^T
        gemm(false, !tb, m, ka, n, T(1), gv, n, vb.data(), ldb, T(1),
             ga.data(), lda);
      else  // dA_raw = op(B) . dC^T
        gemm(tb, true, ka, m, n, T(1), vb.data(), ldb, gv, n, T(1), ga.data(),
             lda);
    }
    if (wants(n_, 1)) {
      Array<T>& gb = n_.inputs[1]->ensure_grad();
      if (!tb)  // dB = op(A)^T . dC
        gemm(!ta, false, ka, n, m, T(1), va.data(), lda, gv, n, T(1),
             gb.data(), ldb);
      else  // dB_raw = dC^T . op(A)
        gemm(true, ta, n, ka, m, T(1), gv, n, va.data(), lda, T(1), gb.data(),
             ldb);
    }
  });
}

// Numerically stable row softmax of x/temp: (N,M) -> (N,M).
template <typename T>
Var<T> softmax_rows(const Var<T>& x, T temp = T(1)) {
  check(x.value().ndim() == 2, "softmax_rows: expects (N,M)");
  const int N = x.value().dim(0), M = x.value().dim(1);
  Array<T> out(x.value().shape());
  const T* px = x.value().data();
  const T inv_temp = T(1) / temp;
  for (int i = 0; i < N; ++i) {
    const T* row = px + static_cast<int64_t>(i) * M;
    T* orow = out.data() + static_cast<int64_t>(i) * M;
    T mx = row[0] * inv_temp;
    for (int j = 1; j < M; ++j) mx = std::max(mx, row[j] * inv_temp);
    T sum = T(0);
    for (int j = 0; j < M; ++j) {
      orow[j] = std::exp(row[j] * inv_temp - mx);
      sum += orow[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < M; ++j) orow[j] *= inv;
  }
  Array<T> saved = out;
  return make_op<T>(std::move(out), {x}, [saved, N, M, inv_temp](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int i = 0; i < N; ++i) {
      const T* y = saved.data() + static_cast<int64_t>(i) * M;
      const T* gy = n.grad.data() + static_cast<int64_t>(i) * M;
      T dot = T(0);
      for (int j = 0; j < M; ++j) dot += gy[j] * y[j];
      T* gx = g.data() + static_cast<int64_t>(i) * M;
      for (int j = 0; j < M; ++j)
        gx[j] += y[j] * (gy[j] - dot) * inv_temp;
    }
  });
}

// Gathers rows by constant index list: (N,C) -> (K,C).
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::vector<int> idx) {
  check(x.value().ndim() == 2, "gather_rows: expects (N,C)");
  const int C = x.value().dim(1);
  Array<T> out({static_cast<int>(idx.size()), C});
  for (size_t i = 0; i < idx.size(); ++i)
    for (int c = 0; c < C; ++c)
      out[static_cast<int64_t>(i) * C + c] =
          x.value()[static_cast<int64_t>(idx[i]) * C + c];
  auto ids = std::make_shared<std::vector<int>>(std::move(idx));
  return make_op<T>(std::move(out), {x}, [ids, C](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (size_t i = 0; i < ids->size(); ++i)
      for (int c = 0; c < C; ++c)
        g[static_cast<int64_t>((*ids)[i]) * C + c] +=
            n.grad[static_cast<int64_t>(i) * C + c];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<int> shape) {
  Array<T> out = x.value().reshaped(shape);
  // Storage is shared; the clone below keeps gradient routing simple.
  Array<T> copy = out.clone();
  return make_op<T>(std::move(copy), {x}, [](Node<T>& n) {
    if (!wants(n, 0)) return;
    Array<T>& g = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

}  // namespace recolor::ops
