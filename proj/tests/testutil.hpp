// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "recolor/autograd.hpp"
#include "recolor/rng.hpp"

namespace recolor::testutil {

// Central finite-difference check. f() must rebuild its graph from the
// current leaf values and return a scalar Var. Reported error is the largest
// |analytic - fd| normalized by the largest gradient magnitude seen, so a
// uniform 1e-3 bound reads as "every coordinate agrees to 0.1% of the
// gradient scale".
template <typename T>
double gradcheck(const std::function<Var<T>()>& f, std::vector<Var<T>> leaves,
                 double step = 1e-3) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Var<T> root = f();
  root.backward();
  std::vector<Array<T>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) {
    analytic.push_back(leaf.has_grad() ? leaf.grad().clone()
                                       : Array<T>::zeros(leaf.value().shape()));
  }
  double max_abs_err = 0.0, max_mag = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Array<T>& v = leaves[li].value();
    for (int64_t i = 0; i < v.size(); ++i) {
      const T orig = v[i];
      v[i] = orig + static_cast<T>(step);
      const double fp = static_cast<double>(f().item());
      v[i] = orig - static_cast<T>(step);
      const double fm = static_cast<double>(f().item());
      v[i] = orig;
      const double fd = (fp - fm) / (2.0 * step);
      const double ana = static_cast<double>(analytic[li][i]);
      max_abs_err = std::max(max_abs_err, std::abs(ana - fd));
      max_mag = std::max({max_mag, std::abs(ana), std::abs(fd)});
    }
  }
  return max_abs_err / std::max(max_mag, 1e-10);
}

template <typename T>
Array<T> random_array(std::vector<int> shape, Rng& rng, T lo = T(-1),
                      T hi = T(1)) {
  Array<T> a(std::move(shape));
  for (int64_t i = 0; i < a.size(); ++i)
    a[i] = static_cast<T>(rng.uniform(static_cast<double>(lo),
                                      static_cast<double>(hi)));
  return a;
}

inline double max_abs_diff(const Array<float>& a, const Array<float>& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline double mean_abs_diff(const Array<float>& a, const Array<float>& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    s += std::abs(static_cast<double>(a[i]) - b[i]);
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

}  // namespace recolor::testutil
