// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major n-d array. Copies are shallow (shared storage); clone()
// deep-copies. Image tensors use CHW order throughout the project.
#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recolor/rng.hpp"

namespace recolor {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
class Array {
 public:
  Array() = default;

  explicit Array(std::vector<int> shape) : shape_(std::move(shape)) {
    size_ = 1;
    for (int d : shape_) {
      check(d >= 0, "Array: negative dimension");
      size_ *= d;
    }
    data_ = std::shared_ptr<T[]>(new T[size_]());
  }

  static Array zeros(std::vector<int> shape) { return Array(std::move(shape)); }

  static Array full(std::vector<int> shape, T v) {
    Array a(std::move(shape));
    for (int64_t i = 0; i < a.size_; ++i) a.data_[i] = v;
    return a;
  }

  static Array scalar(T v) { return full({1}, v); }

  static Array randn(std::vector<int> shape, Rng& rng, T std_dev = T(1)) {
    Array a(std::move(shape));
    for (int64_t i = 0; i < a.size_; ++i)
      a.data_[i] = static_cast<T>(rng.normal()) * std_dev;
    return a;
  }

  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return size_; }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }

  // CHW accessors for 3-d tensors.
  T& at(int c, int y, int x) {
    return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  Array clone() const {
    Array out(shape_);
    for (int64_t i = 0; i < size_; ++i) out.data_[i] = data_[i];
    return out;
  }

  // Shares storage under a new shape with the same element count.
  Array reshaped(std::vector<int> shape) const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    check(n == size_, "reshape: element count mismatch");
    Array out;
    out.shape_ = std::move(shape);
    out.size_ = size_;
    out.data_ = data_;
    return out;
  }

  void fill(T v) {
    for (int64_t i = 0; i < size_; ++i) data_[i] = v;
  }

  bool same_shape(const Array& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i)
      os << shape_[i] << (i + 1 < shape_.size() ? "," : "");
    os << ")";
    return os.str();
  }

 private:
  std::vector<int> shape_;
  std::shared_ptr<T[]> data_;
  int64_t size_ = 0;
};

}  // namespace recolor
