#include <random>

#include <benchmark/benchmark.h>

#include "seasonet/model.hpp"
#include "seasonet/nn/layers.hpp"
#include "seasonet/nn/optim.hpp"

using namespace seasonet;

namespace {

nn::Tensor4<float> random_input(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  std::mt19937_64 rng(42);
  std::normal_distribution<float> d;
  nn::Tensor4<float> x(n, c, h, w);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = d(rng);
  return x;
}

void BM_ConvForward(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  nn::Conv2d<float> conv(ch, ch, nn::PaddingMode::kCircularBoth);
  const auto x = random_input(16, ch, 24, 48);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  nn::Conv2d<float> conv(ch, ch, nn::PaddingMode::kCircularBoth);
  const auto x = random_input(16, ch, 24, 48);
  const auto g = conv.forward(x);
  for (auto _ : state) {
    conv.forward(x);
    benchmark::DoNotOptimize(conv.backward(g));
  }
}
BENCHMARK(BM_ConvBackward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.arch = state.range(0) == 0 ? model::Arch::kUNet : model::Arch::kUNetPP;
  cfg.in_channels = 17;
  cfg.base_width = 8;
  model::Model net(cfg, 1);
  net.set_training(true);
  nn::AdamConfig ac;
  ac.learning_rate = 1e-3;
  nn::Adam opt(net.params(), ac);
  const auto x = random_input(16, 17, 24, 48);
  const auto t = random_input(16, 1, 24, 48);
  for (auto _ : state) {
    opt.zero_grad();
    const auto y = net.forward(x);
    benchmark::DoNotOptimize(nn::mse_loss(y, t));
    net.backward(nn::mse_loss_grad(y, t));
    opt.step();
  }
  state.SetLabel(model::arch_name(cfg.arch));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
