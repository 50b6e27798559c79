#pragma once

// Central finite-difference verification of analytic gradients.
//
// The probe loss is L(y) = sum(R * y) for a fixed random tensor R, so the
// upstream gradient fed to backward() is R itself. Works with any layer-like
// object exposing forward(Tensor4<double>), backward(Tensor4<double>) and
// params() -> std::vector<Param<double>*>.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "seasonet/nn/tensor.hpp"

namespace seasonet::nn {

struct GradCheckResult {
  double max_rel_error_input = 0.0;
  double max_rel_error_params = 0.0;
  std::size_t coordinates_checked = 0;

  double max_rel_error() const { return std::max(max_rel_error_input, max_rel_error_params); }
};

inline double max_abs(std::span<const double> a, std::span<const double> b) {
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  return scale;
}

/// Relative error with a floor of 1e-3 of `scale` (default: the gradient's largest
/// magnitude), so that coordinates whose true gradient is ~0 are judged on an absolute scale.
inline double relative_gradient_error(std::span<const double> analytic, std::span<const double> numeric,
                                      double scale = -1.0) {
  if (scale < 0.0) scale = max_abs(analytic, numeric);
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / den);
  }
  return worst;
}

template <typename Layer>
GradCheckResult finite_diff_check(Layer& layer, const Tensor4<double>& input, double h = 1e-6,
                                  std::uint64_t seed = 1) {
  auto probe_loss = [&](const Tensor4<double>& y, const Tensor4<double>& r) {
    double s = 0.0;
    auto yd = y.data();
    auto rd = r.data();
    for (std::size_t i = 0; i < yd.size(); ++i) s += yd[i] * rd[i];
    return s;
  };

  Tensor4<double> y0 = layer.forward(input);
  Tensor4<double> r(y0.n(), y0.c(), y0.h(), y0.w());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (double& v : r.data()) v = uni(rng);

  for (auto* p : layer.params()) p->zero_grad();
  layer.forward(input);
  const Tensor4<double> grad_in = layer.backward(r);
  std::vector<std::vector<double>> analytic_params;
  for (auto* p : layer.params()) analytic_params.push_back(p->grad);

  GradCheckResult res;
  Tensor4<double> x = input;
  std::vector<double> numeric_in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double fp = probe_loss(layer.forward(x), r);
    x.data()[i] = orig - h;
    const double fm = probe_loss(layer.forward(x), r);
    x.data()[i] = orig;
    numeric_in[i] = (fp - fm) / (2.0 * h);
  }
  res.coordinates_checked += x.size();

  // A parameter whose gradient vanishes identically (a bias feeding batchnorm) is judged
  // against the largest gradient anywhere in the layer.
  double scale = max_abs(grad_in.data(), numeric_in);
  auto params = layer.params();
  std::vector<std::vector<double>> numeric_params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    std::vector<double> numeric(p->size());
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double fp = probe_loss(layer.forward(input), r);
      p->value[i] = orig - h;
      const double fm = probe_loss(layer.forward(input), r);
      p->value[i] = orig;
      numeric[i] = (fp - fm) / (2.0 * h);
    }
    scale = std::max(scale, max_abs(analytic_params[k], numeric));
    numeric_params.push_back(std::move(numeric));
    res.coordinates_checked += p->size();
  }
  res.max_rel_error_input = relative_gradient_error(grad_in.data(), numeric_in, scale);
  for (std::size_t k = 0; k < params.size(); ++k) {
    res.max_rel_error_params =
        std::max(res.max_rel_error_params, relative_gradient_error(analytic_params[k], numeric_params[k], scale));
  }
  return res;
}

}  // namespace seasonet::nn
