#include <cmath>
#include <random>

#include "doctest.h"
#include "seasonet/nn/gradcheck.hpp"
#include "seasonet/nn/layers.hpp"
#include "test_support.hpp"

using namespace seasonet;
using namespace seasonet::nn;
using testing::random_tensor;
using testing::random_vector;

namespace {

template <typename T>
Tensor4<T> row_tensor(std::vector<T> v) {
  Tensor4<T> t(1, 1, 1, v.size());
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

// Dense channel-mixing map y = A x + b at every pixel; linear in both x and the parameters.
struct ChannelMix {
  Param<double> a{"mix.a", {2, 3}};
  Param<double> b{"mix.b", {2}};
  Tensor4<double> x_;

  Tensor4<double> forward(const Tensor4<double>& x) {
    x_ = x;
    Tensor4<double> y(x.n(), 2, x.h(), x.w());
    for (std::size_t n = 0; n < x.n(); ++n)
      for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t p = 0; p < x.plane_size(); ++p) {
          double s = b.value[o];
          for (std::size_t i = 0; i < 3; ++i) s += a.value[o * 3 + i] * x.plane(n, i)[p];
          y.plane(n, o)[p] = s;
        }
    return y;
  }
  Tensor4<double> backward(const Tensor4<double>& g) {
    Tensor4<double> gx(x_.n(), 3, x_.h(), x_.w());
    for (std::size_t n = 0; n < x_.n(); ++n)
      for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t p = 0; p < x_.plane_size(); ++p) {
          const double go = g.plane(n, o)[p];
          b.grad[o] += go;
          for (std::size_t i = 0; i < 3; ++i) {
            a.grad[o * 3 + i] += go * x_.plane(n, i)[p];
            gx.plane(n, i)[p] += a.value[o * 3 + i] * go;
          }
        }
    return gx;
  }
  std::vector<Param<double>*> params() { return {&a, &b}; }
};

template <typename Layer>
void randomize_params(Layer& l, std::mt19937_64& rng) {
  for (auto* p : l.params())
    for (auto& v : p->value) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("circular convolution examples") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor<float>(rng, 2, 3, 5, 6);
  Conv2d<float> id(3, 3, PaddingMode::kCircularBoth);
  for (std::size_t c = 0; c < 3; ++c) id.weight.value[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0f;
  CHECK(id.forward(x) == x);

  Tensor4<float> cst(1, 1, 4, 4, 2.5f);
  std::vector<float> ones(9, 1.0f), zero(1, 0.0f);
  const auto nine = conv2d_circular<float>(cst, ones, zero, 1);
  for (float v : nine.data()) CHECK(v == 9.0f * 2.5f);

  // Kernel picks the left neighbour; on a single row the vertical wrap is the row itself.
  std::vector<float> left(9, 0.0f);
  left[1 * 3 + 0] = 1.0f;
  CHECK(conv2d_circular<float>(row_tensor<float>({1, 2, 3, 4}), left, zero, 1) == row_tensor<float>({4, 1, 2, 3}));

  CHECK_THROWS_AS(id.forward(random_tensor<float>(rng, 1, 2, 4, 4)), DimensionError);
  CHECK_THROWS_AS(Conv2d<float>(3, 3, PaddingMode::kCircularBoth).backward(x), StateError);
}

TEST_CASE("circular convolution equals valid convolution on a wrap-padded input") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t ci = 1 + trial % 3, co = 1 + (trial / 3) % 3, h = 1 + trial % 5, w = 2 + trial % 7;
    const auto x = random_tensor<float>(rng, 1 + trial % 2, ci, h, w);
    const auto wt = random_vector<float>(rng, co * ci * 9);
    const auto b = random_vector<float>(rng, co);
    REQUIRE(pad1(x, PaddingMode::kCircularBoth) == testing::wrap_pad_reference(x));
    const auto got = conv2d_circular<float>(x, wt, b, co);
    REQUIRE(got == testing::valid_conv_reference(testing::wrap_pad_reference(x), wt, b, co));
  }
}

TEST_CASE("reflect-latitude padding mirrors rows and wraps columns") {
  Tensor4<double> x(1, 1, 3, 4);
  for (std::size_t i = 0; i < 12; ++i) x.data()[i] = static_cast<double>(i);
  const auto p = pad1(x, PaddingMode::kCircularLonReflectLat);
  CHECK(p(0, 0, 0, 1) == x(0, 0, 1, 0));
  CHECK(p(0, 0, 4, 1) == x(0, 0, 1, 0));
  CHECK(p(0, 0, 1, 0) == x(0, 0, 0, 3));
  CHECK(p(0, 0, 1, 5) == x(0, 0, 0, 0));
}

TEST_CASE("batch normalization") {
  std::mt19937_64 rng(3);
  // Channel with mean 5 and variance 4: values 3 and 7.
  Tensor4<double> x(2, 1, 1, 2);
  x.data()[0] = 3;
  x.data()[1] = 7;
  x.data()[2] = 3;
  x.data()[3] = 7;
  BatchNorm2d<double> bn(1);
  for (auto& g : bn.gamma.value) g = 1.0;
  const auto y = bn.forward(x);
  double mean = 0, var = 0;
  for (double v : y.data()) mean += v / 4;
  for (double v : y.data()) var += (v - mean) * (v - mean) / 4;
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(var == doctest::Approx(4.0 / (4.0 + 1e-5)).epsilon(1e-12));
  // Running stats: momentum 0.1 from (0, 1) with the unbiased variance 16/3.
  CHECK(bn.running_mean[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 + 0.1 * 16.0 / 3.0).epsilon(1e-12));

  BatchNorm2d<double> affine(2);
  for (auto& g : affine.gamma.value) g = 2.0;
  for (auto& b : affine.beta.value) b = 3.0;
  auto z = random_tensor<double>(rng, 8, 2, 3, 3);
  const auto a = affine.forward(z);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, s = 0;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t p = 0; p < 9; ++p) m += a.plane(n, c)[p] / 72;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t p = 0; p < 9; ++p) s += (a.plane(n, c)[p] - m) * (a.plane(n, c)[p] - m) / 72;
    CHECK(m == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(std::sqrt(s) == doctest::Approx(2.0).epsilon(1e-3));
  }

  BatchNorm2d<double> ev(1);
  for (auto& g : ev.gamma.value) g = 1.5;
  for (auto& b : ev.beta.value) b = -0.5;
  ev.set_training(false);
  CHECK_THROWS_AS(ev.forward(x), StateError);
  ev.set_running_stats({0.0}, {1.0});
  const auto e = ev.forward(x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(e.data()[i] == doctest::Approx(1.5 * x.data()[i] / std::sqrt(1.0 + 1e-5) - 0.5));
  CHECK_THROWS_AS(BatchNorm2d<double>(1).backward(x), StateError);
  CHECK_THROWS_AS(bn.forward(random_tensor<double>(rng, 2, 3, 2, 2)), DimensionError);
}

TEST_CASE("relu, maxpool and upsample") {
  ReLU<float> r;
  CHECK(r.forward(row_tensor<float>({-1, 0, 2})) == row_tensor<float>({0, 0, 2}));
  CHECK(r.forward(row_tensor<float>({-1, -2, -3})) == row_tensor<float>({0, 0, 0}));
  std::mt19937_64 rng(4);
  const auto x = random_tensor<float>(rng, 2, 2, 4, 6);
  ReLU<float> r2;
  CHECK(r2.forward(r.forward(x)) == r.forward(x));
  r.forward(row_tensor<float>({-1.0f}));
  CHECK(r.backward(row_tensor<float>({5.0f})) == row_tensor<float>({0.0f}));

  MaxPool2<float> mp;
  Tensor4<float> q(1, 1, 2, 2);
  q.data()[0] = 1;
  q.data()[1] = 2;
  q.data()[2] = 3;
  q.data()[3] = 4;
  CHECK(mp.forward(q) == Tensor4<float>(1, 1, 1, 1, 4.0f));
  CHECK(mp.forward(Tensor4<float>(1, 3, 4, 4, 7.0f)) == Tensor4<float>(1, 3, 2, 2, 7.0f));
  const auto pooled = mp.forward(Tensor4<float>(1, 1, 24, 48));
  CHECK(pooled.h() == 12);
  CHECK(pooled.w() == 24);
  CHECK_THROWS_AS(mp.forward(Tensor4<float>(1, 1, 3, 4)), DimensionError);
  CHECK_THROWS_AS(MaxPool2<float>().backward(q), StateError);

  Upsample2<float> up;
  CHECK(up.forward(Tensor4<float>(1, 1, 1, 1, 1.0f)) == Tensor4<float>(1, 1, 2, 2, 1.0f));
  const auto big = up.forward(Tensor4<float>(1, 1, 12, 24));
  CHECK(big.h() == 24);
  CHECK(big.w() == 48);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_tensor<float>(rng, 1 + trial % 2, 1 + trial % 3, 1 + trial % 4, 1 + trial % 5);
    REQUIRE(mp.forward(up.forward(t)) == t);
  }
}

TEST_CASE("mse loss") {
  std::mt19937_64 rng(5);
  const auto a = random_tensor<double>(rng, 2, 1, 3, 3);
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(Tensor4<double>(2, 1, 3, 3, 1.0), Tensor4<double>(2, 1, 3, 3, 0.0)) == 1.0);
  CHECK(mse_loss(row_tensor<double>({0, 2}), row_tensor<double>({0, 0})) == 2.0);
  CHECK_THROWS_AS(mse_loss(a, Tensor4<double>(1, 1, 3, 3)), DimensionError);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_tensor<double>(rng, 2, 2, 2, 2);
    const auto t = random_tensor<double>(rng, 2, 2, 2, 2);
    REQUIRE(mse_loss(p, t) > 0.0);
  }
  // d/dx of (x - 0)^2 at x = 3.
  CHECK(mse_loss_grad(row_tensor<double>({3}), row_tensor<double>({0})).data()[0] == 6.0);
}

TEST_CASE("identity-kernel convolution passes the upstream gradient through") {
  std::mt19937_64 rng(6);
  Conv2d<double> id(2, 2, PaddingMode::kCircularBoth);
  for (std::size_t c = 0; c < 2; ++c) id.weight.value[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
  const auto x = random_tensor<double>(rng, 1, 2, 4, 5);
  id.forward(x);
  const auto g = random_tensor<double>(rng, 1, 2, 4, 5);
  CHECK(id.backward(g) == g);
}

TEST_CASE("finite-difference gradient checks") {
  std::mt19937_64 rng(7);
  SUBCASE("linear map") {
    ChannelMix mix;
    randomize_params(mix, rng);
    // Central differences are exact for a linear map, so a coarse step leaves only roundoff.
    CHECK(finite_diff_check(mix, random_tensor<double>(rng, 2, 3, 2, 2), 1e-2).max_rel_error() < 1e-9);
  }
  SUBCASE("circular conv") {
    Conv2d<double> conv(2, 2, PaddingMode::kCircularBoth);
    randomize_params(conv, rng);
    CHECK(finite_diff_check(conv, random_tensor<double>(rng, 1, 2, 8, 8)).max_rel_error() < 1e-6);
    Conv2d<double> refl(2, 3, PaddingMode::kCircularLonReflectLat);
    randomize_params(refl, rng);
    CHECK(finite_diff_check(refl, random_tensor<double>(rng, 2, 2, 4, 6)).max_rel_error() < 1e-6);
  }
  SUBCASE("batchnorm train mode") {
    BatchNorm2d<double> bn(3);
    randomize_params(bn, rng);
    CHECK(finite_diff_check(bn, random_tensor<double>(rng, 4, 3, 3, 3)).max_rel_error() < 1e-5);
  }
  SUBCASE("batchnorm eval mode") {
    BatchNorm2d<double> bn(2);
    randomize_params(bn, rng);
    bn.set_running_stats({0.3, -0.2}, {1.7, 0.4});
    bn.set_training(false);
    CHECK(finite_diff_check(bn, random_tensor<double>(rng, 2, 2, 3, 3)).max_rel_error() < 1e-5);
  }
  SUBCASE("relu, pooling, upsampling") {
    // Keep inputs away from kinks and ties.
    auto x = random_tensor<double>(rng, 2, 2, 4, 4);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = (i % 2 ? 1.0 : -1.0) * (0.1 + 0.01 * static_cast<double>(i));
    ReLU<double> r;
    CHECK(finite_diff_check(r, x).max_rel_error() < 1e-5);
    MaxPool2<double> mp;
    CHECK(finite_diff_check(mp, x).max_rel_error() < 1e-5);
    Upsample2<double> up;
    CHECK(finite_diff_check(up, x).max_rel_error() < 1e-5);
  }
  SUBCASE("conv-bn-relu block") {
    ConvBnRelu<double> block(2, 3, PaddingMode::kCircularBoth, "blk");
    randomize_params(block, rng);
    CHECK(finite_diff_check(block, random_tensor<double>(rng, 3, 2, 4, 4), 1e-6).max_rel_error() < 1e-5);
  }
}

TEST_CASE("channel concat and split are inverse") {
  std::mt19937_64 rng(8);
  const auto a = random_tensor<float>(rng, 2, 3, 2, 4);
  const auto b = random_tensor<float>(rng, 2, 1, 2, 4);
  const Tensor4<float>* parts[] = {&a, &b};
  const auto cat = concat_channels<float>(parts);
  CHECK(cat.c() == 4);
  const std::size_t sizes[] = {3, 1};
  const auto back = split_channels<float>(cat, sizes);
  CHECK(back[0] == a);
  CHECK(back[1] == b);
}

}  // TEST_SUITE
