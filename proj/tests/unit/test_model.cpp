#include <algorithm>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "seasonet/model.hpp"
#include "seasonet/nn/gradcheck.hpp"
#include "seasonet/stacking.hpp"
#include "test_support.hpp"

using namespace seasonet;
using namespace seasonet::model;
using nn::Tensor4;
using testing::random_tensor;

namespace {

ModelConfig config(Arch arch, int in_channels, int width, std::string case_id = {}) {
  ModelConfig c;
  c.arch = arch;
  c.in_channels = in_channels;
  c.base_width = width;
  c.case_id = std::move(case_id);
  return c;
}

std::size_t block_params(std::size_t ci, std::size_t co) { return co * (ci * 9 + 1) + 2 * co; }

// Hand-enumerated (in, out) widths of every conv-bn-relu block plus the 1-channel head.
std::size_t unet_param_oracle(std::size_t in, std::size_t w) {
  const std::vector<std::pair<std::size_t, std::size_t>> blocks{
      {in, w},          {w, w},          {w, 2 * w},      {2 * w, 2 * w}, {2 * w, 4 * w},
      {4 * w, 4 * w},   {4 * w, 8 * w},  {8 * w, 8 * w},  {12 * w, 4 * w}, {4 * w, 4 * w},
      {6 * w, 2 * w},   {2 * w, 2 * w},  {3 * w, w},      {w, w}};
  std::size_t n = 0;
  for (auto [ci, co] : blocks) n += block_params(ci, co);
  return n + (w * 9 + 1);
}

std::size_t unetpp_param_oracle(std::size_t in, std::size_t w) {
  std::size_t n = 0;
  for (auto [ci, co] : std::vector<std::pair<std::size_t, std::size_t>>{
           {in, w}, {w, w}, {w, 2 * w}, {2 * w, 2 * w}, {2 * w, 4 * w}, {4 * w, 4 * w}, {4 * w, 8 * w}, {8 * w, 8 * w}})
    n += block_params(ci, co);
  // Nested nodes x01, x11, x21, x02, x12, x03.
  for (auto [ci, co] : std::vector<std::pair<std::size_t, std::size_t>>{
           {3 * w, w}, {6 * w, 2 * w}, {12 * w, 4 * w}, {4 * w, w}, {8 * w, 2 * w}, {5 * w, w}})
    n += block_params(ci, co);
  // Decoder levels 2, 1, 0 see every same-level node plus the upsampled level below.
  for (auto [ci, co] : std::vector<std::pair<std::size_t, std::size_t>>{
           {16 * w, 4 * w}, {4 * w, 4 * w}, {10 * w, 2 * w}, {2 * w, 2 * w}, {6 * w, w}, {w, w}})
    n += block_params(ci, co);
  return n + (w * 9 + 1);
}

template <typename T>
void randomize_running_stats(Network<T>& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.5);
  for (auto& b : net.buffers())
    for (auto& v : *b.values) v = static_cast<T>(b.name.ends_with("running_var") ? u(rng) : u(rng) - 0.8);
  for (auto* p : net.params())
    if (p->name.ends_with(".bias") || p->name.ends_with("beta"))
      for (auto& v : p->value) v = static_cast<T>(u(rng) - 0.85);
}

Tensor4<float> roll_lon(const Tensor4<float>& x, std::size_t k) {
  Tensor4<float> y(x.n(), x.c(), x.h(), x.w());
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t i = 0; i < x.h(); ++i)
        for (std::size_t j = 0; j < x.w(); ++j) y(n, c, i, (j + k) % x.w()) = x(n, c, i, j);
  return y;
}

Tensor4<float> take_samples(const Tensor4<float>& x, const std::vector<std::size_t>& order) {
  Tensor4<float> y(order.size(), x.c(), x.h(), x.w());
  const std::size_t block = x.c() * x.plane_size();
  for (std::size_t i = 0; i < order.size(); ++i)
    std::copy_n(x.data().begin() + static_cast<long>(order[i] * block), block, y.data().begin() + static_cast<long>(i * block));
  return y;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("layer counts match the architecture description") {
  for (Arch a : {Arch::kUNet, Arch::kUNetPP}) {
    Model m(config(a, 7, 8), 1);
    const auto s = m.summary();
    CHECK(s.encoder_convs == 8);
    CHECK(s.decoder_convs == 7);
    CHECK(s.maxpools == 3);
    CHECK(s.decoder_upsamples == 3);
    if (a == Arch::kUNetPP) {
      CHECK(s.intermediate_convs == 6);
      CHECK(s.intermediate_upsamples == 6);
      CHECK(s.intermediate_resolution_transitions == 3);
    } else {
      CHECK(s.intermediate_convs == 0);
    }
  }
}

TEST_CASE("parameter counts match hand-count oracles") {
  for (int w : {2, 4, 8, 32}) {
    for (int in : {1, 7, 17, 36}) {
      Model u(config(Arch::kUNet, in, w), 1);
      std::size_t counted = 0;
      for (auto* p : u.params()) counted += p->size();
      REQUIRE(u.summary().parameter_count == unet_param_oracle(in, w));
      REQUIRE(counted == unet_param_oracle(in, w));
      Model pp(config(Arch::kUNetPP, in, w), 1);
      REQUIRE(pp.summary().parameter_count == unetpp_param_oracle(in, w));
    }
  }
}

TEST_CASE("output shapes") {
  std::mt19937_64 rng(2);
  Model pp(config(Arch::kUNetPP, 24, 8), 3);
  pp.set_training(false);
  const auto y = pp.forward(random_tensor<float>(rng, 16, 24, 24, 48));
  CHECK(y.n() == 16);
  CHECK(y.c() == 1);
  CHECK(y.h() == 24);
  CHECK(y.w() == 48);
  Model u(config(Arch::kUNet, 3, 4), 3);
  for (auto [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 8}, {16, 8}, {24, 40}}) {
    const auto o = u.forward(random_tensor<float>(rng, 2, 3, h, w));
    CHECK(o.h() == h);
    CHECK(o.w() == w);
  }
  CHECK_THROWS_AS(u.forward(random_tensor<float>(rng, 1, 3, 12, 16)), DimensionError);
  CHECK_THROWS_AS(u.forward(random_tensor<float>(rng, 1, 4, 16, 16)), DimensionError);
}

TEST_CASE("initialization is seeded") {
  Model a(config(Arch::kUNetPP, 5, 4), 42), b(config(Arch::kUNetPP, 5, 4), 42), c(config(Arch::kUNetPP, 5, 4), 43);
  bool all_equal = true, any_diff = false;
  for (std::size_t k = 0; k < a.params().size(); ++k) {
    all_equal = all_equal && a.params()[k]->value == b.params()[k]->value;
    any_diff = any_diff || a.params()[k]->value != c.params()[k]->value;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("eval-mode forward is pure, batch-separable and longitude-equivariant") {
  std::mt19937_64 rng(4);
  for (Arch arch : {Arch::kUNet, Arch::kUNetPP}) {
    Model m(config(arch, 3, 4), 9);
    randomize_running_stats(m, rng);
    m.set_training(false);
    const auto x = random_tensor<float>(rng, 5, 3, 16, 32);
    const auto y = m.forward(x);
    const auto params_before = m.params()[0]->value;
    CHECK(m.forward(x) == y);
    CHECK(m.params()[0]->value == params_before);

    std::vector<std::size_t> order{3, 0, 4, 1, 2};
    CHECK(m.forward(take_samples(x, order)) == take_samples(y, order));

    // Pooling aligns windows every 8 columns, so equivariance is exact for multiples of 8.
    for (std::size_t k : {8u, 16u, 24u}) CHECK(m.forward(roll_lon(x, k)) == roll_lon(y, k));
  }
}

TEST_CASE("whole-network gradients match finite differences") {
  std::mt19937_64 rng(5);
  for (Arch arch : {Arch::kUNet, Arch::kUNetPP}) {
    ModelConfig cfg = config(arch, 2, 2);
    Network<double> net(cfg, 11);
    randomize_running_stats(net, rng);
    net.set_training(false);
    const auto r = nn::finite_diff_check(net, random_tensor<double>(rng, 2, 2, 8, 8), 1e-6);
    CHECK(r.max_rel_error() < 1e-5);
  }
  Network<double> net(config(Arch::kUNetPP, 1, 2), 3);
  CHECK_THROWS_AS(net.backward(Tensor4<double>(1, 1, 8, 8)), StateError);
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
  std::mt19937_64 rng(6);
  testing::TempDir dir("ckpt");
  const auto c = stacking::TemporalCase::parse("y3m2");
  ModelConfig cfg = config(Arch::kUNetPP, stacking::channel_count(c, true), 4, "y3m2");
  cfg.elevation = true;
  cfg.norm.mean = 12.5;
  cfg.norm.std = 9.25;
  cfg.norm.elevation_std = 800.0;
  Model m(cfg, 21);
  randomize_running_stats(m, rng);
  m.set_training(false);
  auto ck = to_checkpoint(m);
  ck.provenance.stage = "pretrain";
  ck.provenance.dataset_ids = {"a.cgt", "b.cgt"};
  ck.provenance.best_epoch = 3;
  ck.hyperparameters["learning_rate"] = 1e-5;
  save_checkpoint(ck, dir.path());

  const auto loaded = load_checkpoint(dir.path());
  CHECK(loaded.config.case_id == "y3m2");
  CHECK(loaded.config.norm.std == 9.25);
  CHECK(loaded.provenance.dataset_ids == ck.provenance.dataset_ids);
  CHECK(loaded.hyperparameters.at("learning_rate") == 1e-5);
  Model back = from_checkpoint(loaded);
  back.set_training(false);
  const auto x = random_tensor<float>(rng, 3, 17, 16, 16);
  CHECK(back.forward(x) == m.forward(x));
  CHECK_THROWS_AS(back.forward(random_tensor<float>(rng, 1, 16, 16, 16)), DimensionError);

  // Mismatched case and channel count is rejected at config validation.
  ModelConfig bad = cfg;
  bad.in_channels = 16;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint corruption names the tensor") {
  testing::TempDir dir("ckpt_bad");
  Model m(config(Arch::kUNet, 1, 2), 1);
  save_checkpoint(to_checkpoint(m), dir.path());
  std::filesystem::path victim;
  for (const auto& e : std::filesystem::directory_iterator(dir / "tensors")) {
    victim = e.path();
    break;
  }
  REQUIRE(!victim.empty());
  std::filesystem::resize_file(victim, std::filesystem::file_size(victim) - 4);
  try {
    load_checkpoint(dir.path());
    FAIL("truncated blob accepted");
  } catch (const CorruptionError& e) {
    CHECK(victim.filename().string() == e.tensor() + ".f32");
  }
  std::filesystem::remove(victim);
  CHECK_THROWS_AS(load_checkpoint(dir.path()), CorruptionError);

  auto ck = to_checkpoint(m);
  ck.tensors.front().shape.push_back(2);
  CHECK_THROWS_AS(from_checkpoint(ck), CorruptionError);
  ck = to_checkpoint(m);
  ck.tensors.pop_back();
  CHECK_THROWS_AS(from_checkpoint(ck), CorruptionError);
}

}  // TEST_SUITE
