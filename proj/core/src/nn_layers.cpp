#include "seasonet/nn/layers.hpp"

#include <cmath>
#include <cstring>

namespace seasonet::nn {

namespace {

struct PadRows {
  std::size_t top;     // source row for padded row 0
  std::size_t bottom;  // source row for padded row H+1
};

PadRows pad_rows(std::size_t h, PaddingMode mode) {
  if (mode == PaddingMode::kCircularBoth) return {h - 1, 0};
  if (h == 1) return {0, 0};
  return {1, h - 2};
}

}  // namespace

template <typename T>
Tensor4<T> pad1(const Tensor4<T>& x, PaddingMode mode) {
  const std::size_t h = x.h();
  const std::size_t w = x.w();
  const std::size_t pw = w + 2;
  Tensor4<T> p(x.n(), x.c(), h + 2, pw);
  const auto rows = pad_rows(h, mode);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = p.plane(n, c);
      auto copy_row = [&](std::size_t src_row, std::size_t dst_row) {
        const T* s = src + src_row * w;
        T* d = dst + dst_row * pw;
        d[0] = s[w - 1];
        std::memcpy(d + 1, s, w * sizeof(T));
        d[w + 1] = s[0];
      };
      copy_row(rows.top, 0);
      for (std::size_t y = 0; y < h; ++y) copy_row(y, y + 1);
      copy_row(rows.bottom, h + 1);
    }
  }
  return p;
}

namespace {

// Adds the padded-gradient plane back onto the cells it was copied from.
template <typename T>
void fold_padded_grad(const T* gp, T* gx, std::size_t h, std::size_t w, PaddingMode mode) {
  const std::size_t pw = w + 2;
  const auto rows = pad_rows(h, mode);
  auto add_row = [&](std::size_t pad_row, std::size_t dst_row) {
    const T* s = gp + pad_row * pw;
    T* d = gx + dst_row * w;
    for (std::size_t x = 0; x < w; ++x) d[x] += s[x + 1];
    d[w - 1] += s[0];
    d[0] += s[w + 1];
  };
  for (std::size_t y = 0; y < h; ++y) add_row(y + 1, y);
  add_row(0, rows.top);
  add_row(h + 1, rows.bottom);
}

template <typename T>
void conv_forward_padded(const Tensor4<T>& p, std::span<const T> weight, std::span<const T> bias,
                         Tensor4<T>& out) {
  const std::size_t cin = p.c();
  const std::size_t h = out.h();
  const std::size_t w = out.w();
  const std::size_t pw = w + 2;
  for (std::size_t n = 0; n < out.n(); ++n) {
    for (std::size_t co = 0; co < out.c(); ++co) {
      T* yp = out.plane(n, co);
      std::fill(yp, yp + h * w, bias[co]);
      const T* wk = weight.data() + co * cin * 9;
      for (std::size_t ci = 0; ci < cin; ++ci, wk += 9) {
        const T* pp = p.plane(n, ci);
        for (std::size_t y = 0; y < h; ++y) {
          T* yr = yp + y * w;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const T* pr = pp + (y + ky) * pw;
            const T w0 = wk[ky * 3 + 0];
            const T w1 = wk[ky * 3 + 1];
            const T w2 = wk[ky * 3 + 2];
            for (std::size_t x = 0; x < w; ++x) yr[x] += w0 * pr[x];
            for (std::size_t x = 0; x < w; ++x) yr[x] += w1 * pr[x + 1];
            for (std::size_t x = 0; x < w; ++x) yr[x] += w2 * pr[x + 2];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor4<T> conv2d_circular(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias,
                           std::size_t out_channels, PaddingMode mode) {
  if (weight.size() != out_channels * x.c() * 9) {
    throw DimensionError("conv2d: weight holds " + std::to_string(weight.size()) + " values, expected " +
                         std::to_string(out_channels * x.c() * 9) + " for " + std::to_string(x.c()) + " input channels");
  }
  if (bias.size() != out_channels) throw DimensionError("conv2d: bias size mismatch");
  const Tensor4<T> p = pad1(x, mode);
  Tensor4<T> out(x.n(), out_channels, x.h(), x.w());
  conv_forward_padded(p, weight, bias, out);
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, PaddingMode mode, std::string name)
    : weight(name + ".weight", {out_channels, in_channels, 3, 3}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      mode_(mode) {}

template <typename T>
Tensor4<T> Conv2d<T>::forward(const Tensor4<T>& x) {
  if (x.c() != in_) {
    throw DimensionError(weight.name + ": input has " + std::to_string(x.c()) + " channels, expected " +
                         std::to_string(in_));
  }
  padded_ = pad1(x, mode_);
  Tensor4<T> out(x.n(), out_, x.h(), x.w());
  conv_forward_padded<T>(padded_, weight.value, bias.value, out);
  return out;
}

template <typename T>
Tensor4<T> Conv2d<T>::backward(const Tensor4<T>& g) {
  if (padded_.empty()) throw StateError(weight.name + ": backward called before forward");
  const std::size_t n_batch = padded_.n();
  const std::size_t h = padded_.h() - 2;
  const std::size_t w = padded_.w() - 2;
  const std::size_t pw = w + 2;
  if (g.n() != n_batch || g.c() != out_ || g.h() != h || g.w() != w) {
    throw DimensionError(weight.name + ": gradient shape " + g.shape_str() + " does not match forward output");
  }

  Tensor4<T> gpad(n_batch, in_, h + 2, pw);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < out_; ++co) {
      const T* gp = g.plane(n, co);
      T bsum = T(0);
      for (std::size_t k = 0; k < h * w; ++k) bsum += gp[k];
      bias.grad[co] += bsum;

      const T* wk = weight.value.data() + co * in_ * 9;
      T* dw = weight.grad.data() + co * in_ * 9;
      for (std::size_t ci = 0; ci < in_; ++ci, wk += 9, dw += 9) {
        const T* pp = padded_.plane(n, ci);
        T* gpp = gpad.plane(n, ci);
        for (std::size_t ky = 0; ky < 3; ++ky) {
          T a0 = T(0), a1 = T(0), a2 = T(0);
          const T w0 = wk[ky * 3 + 0];
          const T w1 = wk[ky * 3 + 1];
          const T w2 = wk[ky * 3 + 2];
          for (std::size_t y = 0; y < h; ++y) {
            const T* gr = gp + y * w;
            const T* pr = pp + (y + ky) * pw;
            T* gpr = gpp + (y + ky) * pw;
            for (std::size_t x = 0; x < w; ++x) {
              a0 += gr[x] * pr[x];
              a1 += gr[x] * pr[x + 1];
              a2 += gr[x] * pr[x + 2];
            }
            for (std::size_t x = 0; x < w; ++x) gpr[x] += w0 * gr[x];
            for (std::size_t x = 0; x < w; ++x) gpr[x + 1] += w1 * gr[x];
            for (std::size_t x = 0; x < w; ++x) gpr[x + 2] += w2 * gr[x];
          }
          dw[ky * 3 + 0] += a0;
          dw[ky * 3 + 1] += a1;
          dw[ky * 3 + 2] += a2;
        }
      }
    }
  }

  Tensor4<T> gx(n_batch, in_, h, w);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t ci = 0; ci < in_; ++ci) fold_padded_grad(gpad.plane(n, ci), gx.plane(n, ci), h, w, mode_);
  return gx;
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, std::string name, double momentum, double epsilon)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean(channels, T(0)),
      running_var(channels, T(1)),
      channels_(channels),
      momentum_(momentum),
      epsilon_(epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("batchnorm epsilon must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("batchnorm momentum must be in (0,1)");
  std::fill(gamma.value.begin(), gamma.value.end(), T(1));
}

template <typename T>
void BatchNorm2d<T>::set_running_stats(std::vector<T> mean, std::vector<T> var) {
  if (mean.size() != channels_ || var.size() != channels_) throw DimensionError(gamma.name + ": running stats size");
  for (T v : var) {
    if (!(v >= T(0))) throw InvariantError(gamma.name + ": running variance must be >= 0");
  }
  running_mean = std::move(mean);
  running_var = std::move(var);
  stats_ready_ = true;
}

template <typename T>
Tensor4<T> BatchNorm2d<T>::forward(const Tensor4<T>& x) {
  if (x.c() != channels_) {
    throw DimensionError(gamma.name + ": input has " + std::to_string(x.c()) + " channels, expected " +
                         std::to_string(channels_));
  }
  const std::size_t plane = x.plane_size();
  const std::size_t count = x.n() * plane;
  Tensor4<T> out(x.n(), x.c(), x.h(), x.w());
  xhat_ = Tensor4<T>(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(channels_, 0.0);

  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (training_) {
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* xp = x.plane(n, c);
        for (std::size_t k = 0; k < plane; ++k) mean += static_cast<double>(xp[k]);
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* xp = x.plane(n, c);
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = static_cast<double>(xp[k]) - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      running_mean[c] = static_cast<T>((1.0 - momentum_) * static_cast<double>(running_mean[c]) + momentum_ * mean);
      running_var[c] = static_cast<T>((1.0 - momentum_) * static_cast<double>(running_var[c]) + momentum_ * unbiased);
    } else {
      if (!stats_ready_) throw StateError(gamma.name + ": eval mode before running statistics were initialized");
      mean = static_cast<double>(running_mean[c]);
      var = static_cast<double>(running_var[c]);
    }
    const double inv = 1.0 / std::sqrt(var + epsilon_);
    inv_std_[c] = inv;
    const double gm = static_cast<double>(gamma.value[c]);
    const double bt = static_cast<double>(beta.value[c]);
    for (std::size_t n = 0; n < x.n(); ++n) {
      const T* xp = x.plane(n, c);
      T* hp = xhat_.plane(n, c);
      T* op = out.plane(n, c);
      for (std::size_t k = 0; k < plane; ++k) {
        const double xh = (static_cast<double>(xp[k]) - mean) * inv;
        hp[k] = static_cast<T>(xh);
        op[k] = static_cast<T>(gm * xh + bt);
      }
    }
  }
  if (training_) stats_ready_ = true;
  cached_ = true;
  cached_training_ = training_;
  return out;
}

template <typename T>
Tensor4<T> BatchNorm2d<T>::backward(const Tensor4<T>& g) {
  if (!cached_) throw StateError(gamma.name + ": backward called before forward");
  if (!g.same_shape(xhat_)) throw DimensionError(gamma.name + ": gradient shape mismatch");
  const std::size_t plane = g.plane_size();
  const double count = static_cast<double>(g.n() * plane);
  Tensor4<T> gx(g.n(), g.c(), g.h(), g.w());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < g.n(); ++n) {
      const T* gp = g.plane(n, c);
      const T* hp = xhat_.plane(n, c);
      for (std::size_t k = 0; k < plane; ++k) {
        sum_g += static_cast<double>(gp[k]);
        sum_gx += static_cast<double>(gp[k]) * static_cast<double>(hp[k]);
      }
    }
    beta.grad[c] += static_cast<T>(sum_g);
    gamma.grad[c] += static_cast<T>(sum_gx);
    const double scale = static_cast<double>(gamma.value[c]) * inv_std_[c];
    const double mean_g = sum_g / count;
    const double mean_gx = sum_gx / count;
    for (std::size_t n = 0; n < g.n(); ++n) {
      const T* gp = g.plane(n, c);
      const T* hp = xhat_.plane(n, c);
      T* op = gx.plane(n, c);
      if (cached_training_) {
        for (std::size_t k = 0; k < plane; ++k) {
          op[k] = static_cast<T>(scale * (static_cast<double>(gp[k]) - mean_g - static_cast<double>(hp[k]) * mean_gx));
        }
      } else {
        for (std::size_t k = 0; k < plane; ++k) op[k] = static_cast<T>(scale * static_cast<double>(gp[k]));
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> ReLU<T>::forward(const Tensor4<T>& x) {
  out_ = x;
  for (T& v : out_.data()) v = v > T(0) ? v : T(0);
  return out_;
}

template <typename T>
Tensor4<T> ReLU<T>::backward(const Tensor4<T>& g) {
  if (out_.empty()) throw StateError("relu: backward called before forward");
  if (!g.same_shape(out_)) throw DimensionError("relu: gradient shape mismatch");
  Tensor4<T> gx = g;
  auto o = out_.data();
  auto d = gx.data();
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (!(o[k] > T(0))) d[k] = T(0);
  }
  return gx;
}

template <typename T>
Tensor4<T> MaxPool2<T>::forward(const Tensor4<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw DimensionError("maxpool2: spatial dims must be even, got " + std::to_string(x.h()) + "x" +
                         std::to_string(x.w()));
  }
  in_h_ = x.h();
  in_w_ = x.w();
  const std::size_t oh = x.h() / 2;
  const std::size_t ow = x.w() / 2;
  Tensor4<T> out(x.n(), x.c(), oh, ow);
  argmax_.assign(out.size(), 0);
  std::size_t k = 0;
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* xp = x.plane(n, c);
      T* op = out.plane(n, c);
      for (std::size_t y = 0; y < oh; ++y) {
        const T* r0 = xp + (2 * y) * in_w_;
        const T* r1 = r0 + in_w_;
        for (std::size_t xx = 0; xx < ow; ++xx, ++k) {
          // First maximum in scan order wins ties.
          T best = r0[2 * xx];
          std::uint8_t arg = 0;
          if (r0[2 * xx + 1] > best) { best = r0[2 * xx + 1]; arg = 1; }
          if (r1[2 * xx] > best) { best = r1[2 * xx]; arg = 2; }
          if (r1[2 * xx + 1] > best) { best = r1[2 * xx + 1]; arg = 3; }
          op[y * ow + xx] = best;
          argmax_[k] = arg;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> MaxPool2<T>::backward(const Tensor4<T>& g) {
  if (argmax_.empty()) throw StateError("maxpool2: backward called before forward");
  if (g.size() != argmax_.size() || g.h() * 2 != in_h_ || g.w() * 2 != in_w_) {
    throw DimensionError("maxpool2: gradient shape mismatch");
  }
  Tensor4<T> gx(g.n(), g.c(), in_h_, in_w_);
  std::size_t k = 0;
  for (std::size_t n = 0; n < g.n(); ++n) {
    for (std::size_t c = 0; c < g.c(); ++c) {
      const T* gp = g.plane(n, c);
      T* xp = gx.plane(n, c);
      for (std::size_t y = 0; y < g.h(); ++y) {
        for (std::size_t xx = 0; xx < g.w(); ++xx, ++k) {
          const std::size_t dy = argmax_[k] >> 1;
          const std::size_t dx = argmax_[k] & 1;
          xp[(2 * y + dy) * in_w_ + 2 * xx + dx] += gp[y * g.w() + xx];
        }
      }
    }
  }
  return gx;
}

template <typename T>
Tensor4<T> Upsample2<T>::forward(const Tensor4<T>& x) {
  Tensor4<T> out(x.n(), x.c(), x.h() * 2, x.w() * 2);
  const std::size_t ow = out.w();
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* xp = x.plane(n, c);
      T* op = out.plane(n, c);
      for (std::size_t y = 0; y < x.h(); ++y) {
        T* r0 = op + (2 * y) * ow;
        for (std::size_t xx = 0; xx < x.w(); ++xx) r0[2 * xx] = r0[2 * xx + 1] = xp[y * x.w() + xx];
        std::memcpy(r0 + ow, r0, ow * sizeof(T));
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> Upsample2<T>::backward(const Tensor4<T>& g) {
  if (g.h() % 2 != 0 || g.w() % 2 != 0) throw DimensionError("upsample2: gradient dims must be even");
  Tensor4<T> gx(g.n(), g.c(), g.h() / 2, g.w() / 2);
  const std::size_t gw = g.w();
  for (std::size_t n = 0; n < g.n(); ++n) {
    for (std::size_t c = 0; c < g.c(); ++c) {
      const T* gp = g.plane(n, c);
      T* xp = gx.plane(n, c);
      for (std::size_t y = 0; y < gx.h(); ++y) {
        const T* r0 = gp + 2 * y * gw;
        const T* r1 = r0 + gw;
        for (std::size_t xx = 0; xx < gx.w(); ++xx) {
          xp[y * gx.w() + xx] = (r0[2 * xx] + r0[2 * xx + 1]) + (r1[2 * xx] + r1[2 * xx + 1]);
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------

template <typename T>
ConvBnRelu<T>::ConvBnRelu(std::size_t in_channels, std::size_t out_channels, PaddingMode mode,
                          const std::string& name)
    : conv(in_channels, out_channels, mode, name + ".conv"), bn(out_channels, name + ".bn") {}

template <typename T>
Tensor4<T> ConvBnRelu<T>::forward(const Tensor4<T>& x) {
  return relu.forward(bn.forward(conv.forward(x)));
}

template <typename T>
Tensor4<T> ConvBnRelu<T>::backward(const Tensor4<T>& g) {
  return conv.backward(bn.backward(relu.backward(g)));
}

template <typename T>
std::vector<Param<T>*> ConvBnRelu<T>::params() {
  return {&conv.weight, &conv.bias, &bn.gamma, &bn.beta};
}

template <typename T>
void ConvBnRelu<T>::clear_cache() {
  conv.clear_cache();
  bn.clear_cache();
  relu.clear_cache();
}

// ---------------------------------------------------------------------------

template <typename T>
double mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
  if (!pred.same_shape(target)) {
    throw DimensionError("mse_loss: shape " + pred.shape_str() + " vs " + target.shape_str());
  }
  double sum = 0.0;
  auto p = pred.data();
  auto t = target.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = static_cast<double>(p[k]) - static_cast<double>(t[k]);
    sum += d * d;
  }
  return sum / static_cast<double>(p.size());
}

template <typename T>
Tensor4<T> mse_loss_grad(const Tensor4<T>& pred, const Tensor4<T>& target) {
  if (!pred.same_shape(target)) {
    throw DimensionError("mse_loss_grad: shape " + pred.shape_str() + " vs " + target.shape_str());
  }
  Tensor4<T> g(pred.n(), pred.c(), pred.h(), pred.w());
  const double scale = 2.0 / static_cast<double>(pred.size());
  auto p = pred.data();
  auto t = target.data();
  auto d = g.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    d[k] = static_cast<T>(scale * (static_cast<double>(p[k]) - static_cast<double>(t[k])));
  }
  return g;
}

template <typename T>
Tensor4<T> concat_channels(std::span<const Tensor4<T>* const> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: nothing to concatenate");
  const auto& first = *parts.front();
  std::size_t channels = 0;
  for (const auto* p : parts) {
    if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w()) {
      throw DimensionError("concat_channels: " + p->shape_str() + " vs " + first.shape_str());
    }
    channels += p->c();
  }
  Tensor4<T> out(first.n(), channels, first.h(), first.w());
  const std::size_t plane = first.plane_size();
  for (std::size_t n = 0; n < first.n(); ++n) {
    std::size_t c0 = 0;
    for (const auto* p : parts) {
      std::memcpy(out.plane(n, c0), p->plane(n, 0), p->c() * plane * sizeof(T));
      c0 += p->c();
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor4<T>> split_channels(const Tensor4<T>& x, std::span<const std::size_t> sizes) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != x.c()) throw DimensionError("split_channels: sizes do not add up to channel count");
  std::vector<Tensor4<T>> out;
  out.reserve(sizes.size());
  const std::size_t plane = x.plane_size();
  std::size_t c0 = 0;
  for (auto s : sizes) {
    Tensor4<T> part(x.n(), s, x.h(), x.w());
    for (std::size_t n = 0; n < x.n(); ++n) std::memcpy(part.plane(n, 0), x.plane(n, c0), s * plane * sizeof(T));
    out.push_back(std::move(part));
    c0 += s;
  }
  return out;
}

#define SEASONET_INSTANTIATE(T)                                                                             \
  template Tensor4<T> pad1<T>(const Tensor4<T>&, PaddingMode);                                               \
  template Tensor4<T> conv2d_circular<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>,          \
                                         std::size_t, PaddingMode);                                          \
  template class Conv2d<T>;                                                                                  \
  template class BatchNorm2d<T>;                                                                             \
  template class ReLU<T>;                                                                                    \
  template class MaxPool2<T>;                                                                                \
  template class Upsample2<T>;                                                                               \
  template class ConvBnRelu<T>;                                                                              \
  template double mse_loss<T>(const Tensor4<T>&, const Tensor4<T>&);                                         \
  template Tensor4<T> mse_loss_grad<T>(const Tensor4<T>&, const Tensor4<T>&);                                \
  template Tensor4<T> concat_channels<T>(std::span<const Tensor4<T>* const>);                                \
  template std::vector<Tensor4<T>> split_channels<T>(const Tensor4<T>&, std::span<const std::size_t>);

SEASONET_INSTANTIATE(float)
SEASONET_INSTANTIATE(double)

#undef SEASONET_INSTANTIATE

}  // namespace seasonet::nn
