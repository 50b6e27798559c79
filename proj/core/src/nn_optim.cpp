#include "seasonet/nn/optim.hpp"

namespace seasonet::nn {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, long step,
                 const AdamConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adam_update: parameter, gradient and moment sizes differ");
  }
  if (step < 1) throw StateError("adam_update: step count must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double w = static_cast<double>(param[i]);
    const double g = static_cast<double>(grad[i]) + cfg.weight_decay * w;
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    param[i] = static_cast<T>(w - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>, long,
                                 const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  long, const AdamConfig&);

Adam::Adam(std::vector<Param<float>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    state_.first_moment.emplace_back(p->size(), 0.0f);
    state_.second_moment.emplace_back(p->size(), 0.0f);
  }
}

void Adam::step() {
  ++state_.step_count;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    adam_update<float>(p->value, p->grad, state_.first_moment[k], state_.second_moment[k], state_.step_count, cfg_);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace seasonet::nn
