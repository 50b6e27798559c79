#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "seasonet/nn/tensor.hpp"

namespace seasonet::nn {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-3;  // coupled L2: added to the gradient
};

/// One Adam update of `param` in place. `step` is the 1-based step count after
/// incrementing. Moments are updated in place.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> first_moment, std::span<T> second_moment,
                 long step, const AdamConfig& cfg);

struct AdamState {
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
  long step_count = 0;
};

class Adam {
 public:
  Adam(std::vector<Param<float>*> params, AdamConfig cfg);

  void step();
  void zero_grad();
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  const AdamConfig& config() const { return cfg_; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<Param<float>*> params_;
  AdamConfig cfg_;
  AdamState state_;
};

/// lr * factor^floor(epoch / step_size), epoch counted from 0.
struct StepLR {
  double base_lr = 1e-5;
  int step_size = 10;
  double factor = 0.1;

  double lr_at(int epoch) const { return base_lr * std::pow(factor, epoch / step_size); }
};

}  // namespace seasonet::nn
