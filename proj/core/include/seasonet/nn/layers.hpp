#pragma once

// Differentiable layers with explicit forward/backward.
//
// Each stateful layer caches what its backward pass needs during forward;
// calling backward without a preceding forward throws StateError.
// Parameter gradients accumulate until zero_grad().

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "seasonet/nn/tensor.hpp"

namespace seasonet::nn {

enum class PaddingMode {
  kCircularBoth,            // wrap rows and columns
  kCircularLonReflectLat,   // wrap columns, reflect rows
};

/// Copy of `x` padded by one cell on every side according to `mode`.
template <typename T>
Tensor4<T> pad1(const Tensor4<T>& x, PaddingMode mode);

/// Stride-1 3x3 convolution with padding from the opposite edge.
/// Per output element the sum order is: bias, then input channel, kernel row, kernel column.
template <typename T>
Tensor4<T> conv2d_circular(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias,
                           std::size_t out_channels, PaddingMode mode = PaddingMode::kCircularBoth);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, PaddingMode mode, std::string name = "conv");

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  PaddingMode padding() const { return mode_; }
  std::vector<Param<T>*> params() { return {&weight, &bias}; }
  void clear_cache() { padded_ = {}; }

  Param<T> weight;  // out x in x 3 x 3
  Param<T> bias;    // out

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  PaddingMode mode_ = PaddingMode::kCircularBoth;
  Tensor4<T> padded_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, std::string name = "bn", double momentum = 0.1, double epsilon = 1e-5);

  /// Train mode normalizes with batch statistics and updates the running estimates
  /// (running_var uses the unbiased batch variance). Eval mode uses running stats.
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  /// Marks running statistics as usable for eval mode.
  void set_running_stats(std::vector<T> mean, std::vector<T> var);
  bool has_running_stats() const { return stats_ready_; }

  std::size_t channels() const { return channels_; }
  double momentum() const { return momentum_; }
  double epsilon() const { return epsilon_; }
  std::vector<Param<T>*> params() { return {&gamma, &beta}; }
  void clear_cache() { xhat_ = {}; inv_std_.clear(); cached_ = false; }

  Param<T> gamma;
  Param<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;

 private:
  std::size_t channels_ = 0;
  double momentum_ = 0.1;
  double epsilon_ = 1e-5;
  bool training_ = true;
  bool stats_ready_ = false;
  bool cached_ = false;
  bool cached_training_ = false;
  Tensor4<T> xhat_;
  std::vector<double> inv_std_;
};

template <typename T>
class ReLU {
 public:
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);
  std::vector<Param<T>*> params() { return {}; }
  void clear_cache() { out_ = {}; }

 private:
  Tensor4<T> out_;
};

template <typename T>
class MaxPool2 {
 public:
  /// 2x2 window, stride 2. Odd H or W throws DimensionError.
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);
  std::vector<Param<T>*> params() { return {}; }
  void clear_cache() { argmax_.clear(); }

 private:
  std::size_t in_h_ = 0, in_w_ = 0;
  std::vector<std::uint8_t> argmax_;  // position 0..3 inside each window
};

/// Nearest-neighbour 2x upsampling.
template <typename T>
class Upsample2 {
 public:
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);
  std::vector<Param<T>*> params() { return {}; }
  void clear_cache() {}
};

/// conv -> batchnorm -> relu.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(std::size_t in_channels, std::size_t out_channels, PaddingMode mode, const std::string& name);

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);
  std::vector<Param<T>*> params();
  void set_training(bool on) { bn.set_training(on); }
  void clear_cache();

  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  ReLU<T> relu;
};

/// Mean of squared differences over every element.
template <typename T>
double mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target);

/// d mse / d pred = 2 (pred - target) / numel.
template <typename T>
Tensor4<T> mse_loss_grad(const Tensor4<T>& pred, const Tensor4<T>& target);

template <typename T>
Tensor4<T> concat_channels(std::span<const Tensor4<T>* const> parts);

template <typename T>
std::vector<Tensor4<T>> split_channels(const Tensor4<T>& x, std::span<const std::size_t> sizes);

}  // namespace seasonet::nn
