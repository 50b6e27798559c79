#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seasonet/errors.hpp"

namespace seasonet::nn {

/// Dense N x C x H x W tensor, row-major.
template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : n_(n), c_(c), h_(h), w_(w), data_(n * c * h * w, fill) {
    if (n == 0 || c == 0 || h == 0 || w == 0) throw DimensionError("tensor dimensions must be >= 1");
  }

  std::size_t n() const { return n_; }
  std::size_t c() const { return c_; }
  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return h_ * w_; }
  bool empty() const { return data_.empty(); }

  bool same_shape(const Tensor4& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  std::string shape_str() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
  }

  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * c_ + c) * h_ + y) * w_ + x];
  }
  T operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * c_ + c) * h_ + y) * w_ + x];
  }

  T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * c_ + c) * h_ * w_; }
  const T* plane(std::size_t n, std::size_t c) const { return data_.data() + (n * c_ + c) * h_ * w_; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor4&) const = default;

 private:
  std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor4<To> tensor_cast(const Tensor4<From>& x) {
  Tensor4<To> out(x.n(), x.c(), x.h(), x.w());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  return out;
}

/// Named trainable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t count = 1;
    for (auto d : shape) count *= d;
    value.assign(count, T(0));
    grad.assign(count, T(0));
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

}  // namespace seasonet::nn
