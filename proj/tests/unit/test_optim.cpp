#include <cmath>
#include <random>

#include "doctest.h"
#include "seasonet/nn/optim.hpp"
#include "test_support.hpp"

using namespace seasonet;
using namespace seasonet::nn;

TEST_SUITE("optim") {

TEST_CASE("first Adam step closed form") {
  AdamConfig cfg;
  cfg.learning_rate = 1e-5;
  cfg.weight_decay = 0.0;
  std::vector<double> w{1.0}, g{1.0}, m{0.0}, v{0.0};
  adam_update<double>(w, g, m, v, 1, cfg);
  // m_hat = v_hat = 1, so the step is lr / (1 + eps).
  CHECK(w[0] == doctest::Approx(1.0 - 1e-5 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(m[0] == doctest::Approx(0.1));
  CHECK(v[0] == doctest::Approx(0.001));
}

TEST_CASE("zero gradient is a fixed point without decay") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> w{0.7, -2.0}, g{0.0, 0.0}, m{0.0, 0.0}, v{0.0, 0.0};
  for (long s = 1; s <= 5; ++s) adam_update<double>(w, g, m, v, s, cfg);
  CHECK(w == std::vector<double>{0.7, -2.0});
}

TEST_CASE("coupled decay shrinks toward zero") {
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 1e-3;
  std::vector<double> w{2.0, -3.0}, g{0.0, 0.0}, m{0.0, 0.0}, v{0.0, 0.0};
  adam_update<double>(w, g, m, v, 1, cfg);
  for (double w0 : {2.0, -3.0}) {
    const double ge = 1e-3 * w0;
    const double expected = w0 - 1e-3 * ge / (std::abs(ge) + 1e-8);
    CHECK(std::abs(expected) < std::abs(w0));
  }
  CHECK(w[0] == doctest::Approx(2.0 - 1e-3 * 2e-3 / (2e-3 + 1e-8)).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(-3.0 + 1e-3 * 3e-3 / (3e-3 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("multi-step Adam matches a scalar reference") {
  std::mt19937_64 rng(1);
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.weight_decay = 1e-3;
  const auto w0 = testing::random_vector<double>(rng, 5);
  std::vector<double> w = w0, m(5, 0.0), v(5, 0.0);
  std::vector<double> rw = w0, rm(5, 0.0), rv(5, 0.0);
  for (long s = 1; s <= 10; ++s) {
    const auto g = testing::random_vector<double>(rng, 5);
    adam_update<double>(w, g, m, v, s, cfg);
    for (std::size_t i = 0; i < 5; ++i) {
      const double gi = g[i] + cfg.weight_decay * rw[i];
      rm[i] = 0.9 * rm[i] + 0.1 * gi;
      rv[i] = 0.999 * rv[i] + 0.001 * gi * gi;
      const double mh = rm[i] / (1.0 - std::pow(0.9, s));
      const double vh = rv[i] / (1.0 - std::pow(0.999, s));
      rw[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    }
  }
  for (std::size_t i = 0; i < 5; ++i) CHECK(w[i] == doctest::Approx(rw[i]).epsilon(1e-14));
}

TEST_CASE("Adam over parameters is deterministic") {
  std::mt19937_64 rng(2);
  Param<float> p1("p", {3, 4}), p2("p", {3, 4});
  const auto init = testing::random_vector<float>(rng, 12);
  p1.value = p2.value = init;
  Adam a1({&p1}, {}), a2({&p2}, {});
  for (int s = 0; s < 5; ++s) {
    const auto g = testing::random_vector<float>(rng, 12);
    p1.grad = p2.grad = g;
    a1.step();
    a2.step();
  }
  CHECK(p1.value == p2.value);
  CHECK(a1.state().step_count == 5);
  a1.zero_grad();
  CHECK(p1.grad == std::vector<float>(12, 0.0f));
  std::vector<double> w{1.0}, g{1.0, 2.0}, m{0.0}, v{0.0};
  CHECK_THROWS_AS(adam_update<double>(w, g, m, v, 1, {}), DimensionError);
}

TEST_CASE("step learning-rate schedule") {
  StepLR s{1e-5, 10, 0.1};
  CHECK(s.lr_at(0) == 1e-5);
  CHECK(s.lr_at(9) == 1e-5);
  CHECK(s.lr_at(10) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(s.lr_at(25) == doctest::Approx(1e-7).epsilon(1e-12));
  StepLR half{1.0, 3, 0.5};
  CHECK(half.lr_at(6) == 0.25);
}

}  // TEST_SUITE
