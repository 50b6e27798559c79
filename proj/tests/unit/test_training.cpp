#include <cmath>
#include <numeric>

#include "doctest.h"
#include "seasonet/training.hpp"
#include "test_support.hpp"

using namespace seasonet;
using namespace seasonet::training;

namespace {

struct Fixture {
  dataio::SyntheticData data;
  dataio::NormStats norm;
  stacking::TemporalCase tc;
  std::vector<stacking::Sample> train, val;
  model::ModelConfig cfg;
};

Fixture make_fixture(double base_equator = 27.0, std::uint64_t seed = 3, const char* case_id = "seq-6") {
  Fixture f;
  dataio::SyntheticConfig sc;
  sc.n_lat = 8;
  sc.n_lon = 16;
  sc.n_years = 5;
  sc.noise_std = 0.3;
  sc.base_equator = base_equator;
  sc.seed = seed;
  f.data = dataio::generate_synthetic(sc);
  f.tc = stacking::TemporalCase::parse(case_id);
  const MonthRange train_range{sc.start, {sc.start.year + 3, 12}};
  const MonthRange val_range{{sc.start.year + 4, 1}, f.data.series.end()};
  const std::vector<GridSeries> train_part{f.data.series.slice(train_range)};
  f.norm = dataio::compute_norm_stats(train_part, &f.data.elevation, "fixture");
  f.train = stacking::assemble_samples(f.data.series, nullptr, f.norm, f.tc, train_range);
  f.val = stacking::assemble_samples(f.data.series, nullptr, f.norm, f.tc, val_range);
  f.cfg.arch = model::Arch::kUNet;
  f.cfg.in_channels = stacking::channel_count(f.tc, false);
  f.cfg.base_width = 4;
  f.cfg.case_id = f.tc.id();
  f.cfg.norm = f.norm;
  return f;
}

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = epochs;
  c.batch_size = 8;
  c.step_size_epochs = 2;
  c.lr_factor = 0.5;
  c.early_stop_patience = 0;
  c.seed = 5;
  return c;
}

std::vector<std::vector<float>> param_values(model::Model& m) {
  std::vector<std::vector<float>> v;
  for (auto* p : m.params()) v.push_back(p->value);
  return v;
}

std::vector<std::vector<float>> blobs(const model::Checkpoint& c) {
  std::vector<std::vector<float>> v;
  for (const auto& t : c.tensors) v.push_back(t.values);
  return v;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.learning_rate == 1e-5);
  CHECK(c.weight_decay == 1e-3);
  CHECK(c.epochs == 40);
  CHECK(c.batch_size == 16);
  c.early_stop_patience = 41;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("early stopping follows the constructed curve") {
  EarlyStopping es(2);
  const std::vector<double> curve{1.0, 0.5, 0.6, 0.7, 0.8, 0.9};
  int stopped_after = 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    es.observe(static_cast<int>(i) + 1, curve[i]);
    if (es.should_stop()) {
      stopped_after = static_cast<int>(i) + 1;
      break;
    }
  }
  CHECK(stopped_after == 4);
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_loss() == 0.5);

  EarlyStopping never(0);
  for (int e = 1; e <= 10; ++e) never.observe(e, static_cast<double>(e));
  CHECK_FALSE(never.should_stop());
  CHECK(never.best_epoch() == 1);
}

TEST_CASE("zero epochs leaves the parameters untouched") {
  auto f = make_fixture();
  model::Model m(f.cfg, 1);
  const auto before = param_values(m);
  auto r = train(m, f.train, f.val, quick(0));
  CHECK(param_values(m) == before);
  CHECK(r.history.epochs.size() == 1);
  CHECK(r.history.best_epoch == 0);
  model::Model fresh(f.cfg, 1);
  CHECK(blobs(r.checkpoint) == blobs(model::to_checkpoint(fresh)));
}

TEST_CASE("first update lowers the training objective") {
  auto f = make_fixture();
  model::Model m(f.cfg, 2);
  const std::vector<std::size_t> all = [&] {
    std::vector<std::size_t> v(8);
    std::iota(v.begin(), v.end(), 0);
    return v;
  }();
  const auto x = input_batch(f.train, all);
  const auto y = target_batch(f.train, all, f.norm);
  m.set_training(true);
  nn::Adam opt(m.params(), quick(1).adam());
  const auto p0 = m.forward(x);
  const double before = nn::mse_loss(p0, y);
  m.backward(nn::mse_loss_grad(p0, y));
  opt.set_learning_rate(1e-4);
  opt.step();
  CHECK(nn::mse_loss(m.forward(x), y) < before);
}

TEST_CASE("history, schedule and best-epoch selection") {
  auto f = make_fixture();
  model::Model m(f.cfg, 3);
  std::vector<int> seen;
  auto cfg = quick(5);
  auto r = train(m, f.train, f.val, cfg, [&](const EpochRecord& e) { seen.push_back(e.epoch); });
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4, 5});
  REQUIRE(r.history.epochs.size() == 6);
  for (const auto& e : r.history.epochs) {
    if (e.epoch == 0) continue;
    CHECK(e.learning_rate == cfg.learning_rate * std::pow(cfg.lr_factor, (e.epoch - 1) / cfg.step_size_epochs));
  }
  double best = r.history.epochs[0].val_mse;
  int best_epoch = 0;
  for (const auto& e : r.history.epochs)
    if (e.val_mse < best) best = e.val_mse, best_epoch = e.epoch;
  CHECK(r.history.best_epoch == best_epoch);
  CHECK(r.history.best_validation_loss == best);
  CHECK(r.checkpoint.provenance.best_epoch == best_epoch);
  CHECK(r.history.epochs.back().val_mse < r.history.epochs.front().val_mse);

  // The returned model and checkpoint both reproduce the recorded best loss.
  CHECK(std::abs(evaluate_loss(m, f.val).mse - best) <= 1e-6);
  auto restored = model::from_checkpoint(r.checkpoint);
  CHECK(std::abs(evaluate_loss(restored, f.val).mse - best) <= 1e-6);
}

TEST_CASE("fixed-seed runs are bitwise reproducible") {
  auto f = make_fixture();
  for (bool shuffle : {false, true}) {
    auto cfg = quick(3);
    cfg.shuffle = shuffle;
    model::Model a(f.cfg, 4), b(f.cfg, 4);
    const auto ra = train(a, f.train, f.val, cfg);
    const auto rb = train(b, f.train, f.val, cfg);
    REQUIRE(ra.history.epochs.size() == rb.history.epochs.size());
    for (std::size_t i = 0; i < ra.history.epochs.size(); ++i) {
      CHECK(ra.history.epochs[i].train_mse == rb.history.epochs[i].train_mse);
      CHECK(ra.history.epochs[i].val_mse == rb.history.epochs[i].val_mse);
    }
    CHECK(blobs(ra.checkpoint) == blobs(rb.checkpoint));
  }
}

TEST_CASE("fine-tuning") {
  auto f = make_fixture();
  model::Model m(f.cfg, 6);
  const auto pre = train(m, f.train, f.val, quick(3));

  SUBCASE("zero epochs is a no-op") {
    const auto ft = finetune(pre.checkpoint, f.train, f.val, quick(0));
    CHECK(blobs(ft.checkpoint) == blobs(pre.checkpoint));
    CHECK(ft.checkpoint.config.norm.mean == pre.checkpoint.config.norm.mean);
  }
  SUBCASE("on the pretraining data it cannot get worse") {
    const auto ft = finetune(pre.checkpoint, f.train, f.val, quick(2));
    CHECK(ft.history.best_validation_loss <= pre.history.best_validation_loss + 1e-6);
    CHECK(ft.checkpoint.provenance.stage == "finetune");
  }
  SUBCASE("case mismatch is a configuration error") {
    auto other = make_fixture(27.0, 3, "seq-12");
    CHECK_THROWS_AS(finetune(pre.checkpoint, other.train, other.val, quick(1)), ConfigError);
  }
  SUBCASE("adapts to a shifted climate with frozen statistics") {
    auto shifted = make_fixture(31.0, 9);
    // Re-normalize the shifted data with the pretraining statistics.
    const auto& st = pre.checkpoint.config.norm;
    const MonthRange tr{shifted.data.series.start(), {shifted.data.series.start().year + 3, 12}};
    const MonthRange va{{shifted.data.series.start().year + 4, 1}, shifted.data.series.end()};
    const auto ft_train = stacking::assemble_samples(shifted.data.series, nullptr, st, shifted.tc, tr);
    const auto ft_val = stacking::assemble_samples(shifted.data.series, nullptr, st, shifted.tc, va);
    auto base = model::from_checkpoint(pre.checkpoint);
    const double before = evaluate_loss(base, ft_val).mse;
    auto cfg = quick(4);
    const auto ft = finetune(pre.checkpoint, ft_train, ft_val, cfg);
    auto tuned = model::from_checkpoint(ft.checkpoint);
    CHECK(tuned.config().norm.mean == st.mean);
    CHECK(evaluate_loss(tuned, ft_val).mse < before);
  }
}

TEST_CASE("prediction") {
  auto f = make_fixture();
  model::Model m(f.cfg, 7);
  const auto r = train(m, f.train, f.val, quick(1));
  const MonthStamp target = f.data.series.end();
  const auto a = predict(r.checkpoint, f.data.series, nullptr, target);
  const auto b = predict(r.checkpoint, f.data.series, nullptr, target);
  CHECK(a == b);
  CHECK(a.n_lat() == 8);
  CHECK(a.n_lon() == 16);
  // One month past the end is forecastable; before the window start is not.
  CHECK_NOTHROW(predict(r.checkpoint, f.data.series, nullptr, target.advanced(1)));
  CHECK_THROWS_AS(predict(r.checkpoint, f.data.series, nullptr, f.data.series.start().advanced(3)),
                  InsufficientHistoryError);

  const auto range = predict_range(m, f.data.series, nullptr, {{f.data.series.end().year, 1}, f.data.series.end()});
  CHECK(range.size() == 12);
  CHECK(range[11] == predict(m, f.data.series, nullptr, target));
}

TEST_CASE("history file and log line") {
  testing::TempDir dir("hist");
  TrainHistory h;
  h.epochs.push_back({0, 1e-3, 0.5, 0.6, 1.2});
  h.epochs.push_back({1, 1e-3, 0.25, 0.3, 0.8});
  h.best_epoch = 1;
  h.best_validation_loss = 0.3;
  write_history(h, dir / "history.json");
  CHECK(std::filesystem::file_size(dir / "history.json") > 0);
  const auto line = format_epoch_line(h.epochs[1]);
  CHECK(line.find("epoch 1") != std::string::npos);
}

}  // TEST_SUITE
