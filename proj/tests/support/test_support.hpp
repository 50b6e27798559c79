#pragma once

// Shared fixtures and brute-force reference implementations for the test suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "seasonet/grid.hpp"
#include "seasonet/nn/tensor.hpp"

namespace seasonet::testing {

inline GridField random_field(std::mt19937_64& rng, std::size_t n_lat, std::size_t n_lon, double lo = -5.0,
                              double hi = 5.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n_lat * n_lon);
  for (auto& x : v) x = u(rng);
  return GridField(n_lat, n_lon, std::move(v));
}

inline GridSeries random_series(std::mt19937_64& rng, MonthStamp start, std::size_t months, std::size_t n_lat,
                                std::size_t n_lon, double lo = -5.0, double hi = 5.0) {
  std::vector<GridField> f;
  for (std::size_t k = 0; k < months; ++k) f.push_back(random_field(rng, n_lat, n_lon, lo, hi));
  return GridSeries(start, std::move(f));
}

inline GridSeries constant_series(MonthStamp start, std::size_t months, std::size_t n_lat, std::size_t n_lon,
                                  double value) {
  return GridSeries(start, std::vector<GridField>(months, GridField(n_lat, n_lon, value)));
}

inline GridField field_of(std::size_t n_lat, std::size_t n_lon, std::vector<double> v) {
  return GridField(n_lat, n_lon, std::move(v));
}

template <typename T>
nn::Tensor4<T> random_tensor(std::mt19937_64& rng, std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                             double lo = -1.0, double hi = 1.0) {
  nn::Tensor4<T> t(n, c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : t.data()) x = static_cast<T>(u(rng));
  return t;
}

template <typename T>
std::vector<T> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

/// Wrap-pads by one cell on all four sides with explicit modular indexing.
template <typename T>
nn::Tensor4<T> wrap_pad_reference(const nn::Tensor4<T>& x) {
  const long H = static_cast<long>(x.h());
  const long W = static_cast<long>(x.w());
  nn::Tensor4<T> p(x.n(), x.c(), x.h() + 2, x.w() + 2);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (long y = -1; y <= H; ++y)
        for (long xx = -1; xx <= W; ++xx) {
          const long sy = ((y % H) + H) % H;
          const long sx = ((xx % W) + W) % W;
          p(n, c, static_cast<std::size_t>(y + 1), static_cast<std::size_t>(xx + 1)) =
              x(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
  return p;
}

/// Valid 3x3 cross-correlation of an already padded tensor. Sum order per output
/// element: bias, then input channel, kernel row, kernel column.
template <typename T>
nn::Tensor4<T> valid_conv_reference(const nn::Tensor4<T>& padded, const std::vector<T>& weight,
                                    const std::vector<T>& bias, std::size_t out_channels) {
  const std::size_t H = padded.h() - 2;
  const std::size_t W = padded.w() - 2;
  const std::size_t C = padded.c();
  nn::Tensor4<T> out(padded.n(), out_channels, H, W);
  for (std::size_t n = 0; n < padded.n(); ++n)
    for (std::size_t co = 0; co < out_channels; ++co)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          T acc = bias[co];
          for (std::size_t ci = 0; ci < C; ++ci)
            for (std::size_t ky = 0; ky < 3; ++ky)
              for (std::size_t kx = 0; kx < 3; ++kx)
                acc += weight[((co * C + ci) * 3 + ky) * 3 + kx] * padded(n, ci, y + ky, x + kx);
          out(n, co, y, x) = acc;
        }
  return out;
}

/// Flat mean of |a - b| over all cells in one loop.
inline double mae_reference(const GridField& a, const GridField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.n_lat(); ++i)
    for (std::size_t j = 0; j < a.n_lon(); ++j) s += std::abs(a(i, j) - b(i, j));
  return s / static_cast<double>(a.size());
}

inline double masked_mae_reference(const GridField& a, const GridField& b, const GridField& mask) {
  double s = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < a.n_lat(); ++i)
    for (std::size_t j = 0; j < a.n_lon(); ++j)
      if (mask(i, j) == 1.0) {
        s += std::abs(a(i, j) - b(i, j));
        n += 1.0;
      }
  return s / n;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("seasonet_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace seasonet::testing
