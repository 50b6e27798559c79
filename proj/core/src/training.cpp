#include "seasonet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

namespace seasonet::training {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (step_size_epochs < 1) throw ConfigError("scheduler step size must be >= 1");
  if (!(lr_factor > 0.0)) throw ConfigError("scheduler factor must be positive");
  if (early_stop_patience < 0) throw ConfigError("patience must be >= 0");
  if (epochs > 0 && early_stop_patience > epochs) throw ConfigError("patience cannot exceed the epoch budget");
}

nn::AdamConfig TrainConfig::adam() const {
  nn::AdamConfig a = adam_defaults;
  a.learning_rate = learning_rate;
  a.weight_decay = weight_decay;
  return a;
}

std::map<std::string, double> TrainConfig::as_map() const {
  return {{"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"scheduler_step_size_epochs", step_size_epochs},
          {"scheduler_factor", lr_factor},
          {"early_stop_patience", early_stop_patience},
          {"seed", static_cast<double>(seed)},
          {"shuffle", shuffle ? 1.0 : 0.0},
          {"adam_beta1", adam_defaults.beta1},
          {"adam_beta2", adam_defaults.beta2},
          {"adam_epsilon", adam_defaults.epsilon},
          {"batchnorm_momentum", 0.1},
          {"batchnorm_epsilon", 1e-5}};
}

bool EarlyStopping::observe(int epoch, double val_loss) {
  if (best_epoch_ < 0 || val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

// ---------------------------------------------------------------------------

nn::Tensor4<float> input_batch(std::span<const stacking::Sample> samples, std::span<const std::size_t> order) {
  const auto& first = samples[order.front()];
  nn::Tensor4<float> x(order.size(), first.channels, first.n_lat, first.n_lon);
  const std::size_t stride = first.input.size();
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto& s = samples[order[b]];
    if (s.input.size() != stride) throw DimensionError("samples in one batch differ in shape");
    std::memcpy(x.plane(b, 0), s.input.data(), stride * sizeof(float));
  }
  return x;
}

nn::Tensor4<float> target_batch(std::span<const stacking::Sample> samples, std::span<const std::size_t> order,
                                const dataio::NormStats& norm) {
  const auto& first = samples[order.front()];
  nn::Tensor4<float> y(order.size(), 1, first.n_lat, first.n_lon);
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto t = samples[order[b]].target.values();
    float* dst = y.plane(b, 0);
    for (std::size_t k = 0; k < t.size(); ++k) dst[k] = static_cast<float>(norm.normalize(t[k]));
  }
  return y;
}

namespace {

void check_samples(const model::Model& net, std::span<const stacking::Sample> samples, const char* what) {
  const auto& cfg = net.config();
  for (const auto& s : samples) {
    if (s.channels != static_cast<std::size_t>(cfg.in_channels)) {
      throw ConfigError(std::string(what) + " sample has " + std::to_string(s.channels) +
                        " channels; model expects " + std::to_string(cfg.in_channels));
    }
    if (!cfg.case_id.empty() && !s.case_id.empty() && s.case_id != cfg.case_id) {
      throw ConfigError(std::string(what) + " sample was assembled for case " + s.case_id + ", model is for " +
                        cfg.case_id);
    }
  }
}

std::vector<std::size_t> iota_order(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

EvalLoss evaluate_loss(model::Model& net, std::span<const stacking::Sample> samples, int batch_size) {
  if (samples.empty()) throw ConfigError("evaluate_loss: no samples");
  const bool was_training = net.training();
  net.set_training(false);
  const auto& norm = net.config().norm;
  const auto order = iota_order(samples.size());
  double sq = 0.0;
  double abs_c = 0.0;
  std::size_t elements = 0;
  for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(batch_size));
    std::span<const std::size_t> idx(order.data() + b0, b1 - b0);
    const auto x = input_batch(samples, idx);
    const auto y = target_batch(samples, idx, norm);
    const auto p = net.forward(x);
    const double batch_mse = nn::mse_loss(p, y);
    sq += batch_mse * static_cast<double>(p.size());
    elements += p.size();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto t = samples[idx[b]].target.values();
      const float* pp = p.plane(b, 0);
      double s = 0.0;
      for (std::size_t k = 0; k < t.size(); ++k) s += std::abs(norm.denormalize(pp[k]) - t[k]);
      abs_c += s / static_cast<double>(t.size());
    }
  }
  net.clear_cache();
  net.set_training(was_training);
  return {sq / static_cast<double>(elements), abs_c / static_cast<double>(samples.size())};
}

TrainResult train(model::Model& net, std::span<const stacking::Sample> train_samples,
                  std::span<const stacking::Sample> val_samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_samples.empty()) throw ConfigError("training set is empty");
  if (val_samples.empty()) throw ConfigError("validation set is empty");
  check_samples(net, train_samples, "training");
  check_samples(net, val_samples, "validation");

  const auto& norm = net.config().norm;
  nn::Adam opt(net.params(), cfg.adam());
  const auto sched = cfg.scheduler();
  std::mt19937_64 rng(cfg.seed);
  EarlyStopping stopper(cfg.early_stop_patience);
  TrainHistory hist;

  auto snapshot = [&]() { return model::to_checkpoint(net); };

  {
    const auto tr = evaluate_loss(net, train_samples, cfg.batch_size);
    const auto va = evaluate_loss(net, val_samples, cfg.batch_size);
    EpochRecord r{0, sched.lr_at(0), tr.mse, va.mse, va.mae_c};
    hist.epochs.push_back(r);
    stopper.observe(0, va.mse);
    if (on_epoch) on_epoch(r);
  }
  model::Checkpoint best = snapshot();

  auto order = iota_order(train_samples.size());
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = sched.lr_at(epoch - 1);
    opt.set_learning_rate(lr);
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    net.set_training(true);
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    int step = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += bs, ++step) {
      const std::size_t b1 = std::min(order.size(), b0 + bs);
      std::span<const std::size_t> idx(order.data() + b0, b1 - b0);
      const auto x = input_batch(train_samples, idx);
      const auto y = target_batch(train_samples, idx, norm);
      opt.zero_grad();
      const auto p = net.forward(x);
      const double loss = nn::mse_loss(p, y);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
      net.backward(nn::mse_loss_grad(p, y));
      opt.step();
      loss_sum += loss * static_cast<double>(idx.size());
      loss_n += idx.size();
    }
    net.clear_cache();
    const auto va = evaluate_loss(net, val_samples, cfg.batch_size);
    if (!std::isfinite(va.mse)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord r{epoch, lr, loss_sum / static_cast<double>(loss_n), va.mse, va.mae_c};
    hist.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
    if (stopper.observe(epoch, va.mse)) best = snapshot();
    if (stopper.should_stop()) {
      hist.stopped_early = true;
      break;
    }
  }

  hist.best_epoch = stopper.best_epoch();
  hist.best_validation_loss = stopper.best_loss();

  // Leave the caller's model at the selected epoch.
  net = model::from_checkpoint(best);

  best.hyperparameters = cfg.as_map();
  best.provenance.stage = "pretrain";
  best.provenance.epochs_run = static_cast<int>(hist.epochs.size()) - 1;
  best.provenance.best_epoch = hist.best_epoch;
  best.provenance.best_validation_loss = hist.best_validation_loss;
  return {std::move(best), std::move(hist)};
}

TrainResult finetune(const model::Checkpoint& ckpt, std::span<const stacking::Sample> finetune_samples,
                     std::span<const stacking::Sample> val_samples, const TrainConfig& cfg,
                     const EpochCallback& on_epoch) {
  for (auto samples : {finetune_samples, val_samples}) {
    for (const auto& s : samples) {
      if (s.case_id != ckpt.config.case_id) {
        throw ConfigError("fine-tuning samples use case " + s.case_id + " but the checkpoint was trained on " +
                          ckpt.config.case_id);
      }
    }
  }
  model::Model net = model::from_checkpoint(ckpt);
  auto result = train(net, finetune_samples, val_samples, cfg, on_epoch);
  result.checkpoint.provenance.stage = "finetune";
  result.checkpoint.provenance.dataset_ids = ckpt.provenance.dataset_ids;
  result.checkpoint.provenance.parent = ckpt.provenance.stage;
  return result;
}

// ---------------------------------------------------------------------------

GridSeries predict_range(model::Model& net, const GridSeries& series, const dataio::ElevationField* elevation,
                         MonthRange range, int batch_size) {
  const auto& cfg = net.config();
  if (cfg.case_id.empty()) throw ConfigError("model has no temporal case; cannot assemble inputs");
  if (cfg.elevation && elevation == nullptr) throw ConfigError("model was trained with elevation; none supplied");
  if (!cfg.elevation) elevation = nullptr;
  const auto tc = stacking::TemporalCase::parse(cfg.case_id);
  const long first = month_index(series.start(), range.first);
  const long count = range.size();

  const bool was_training = net.training();
  net.set_training(false);
  std::vector<GridField> out;
  out.reserve(static_cast<std::size_t>(count));
  const std::size_t plane = series.n_lat() * series.n_lon();
  for (long b0 = 0; b0 < count; b0 += batch_size) {
    const long b1 = std::min(count, b0 + batch_size);
    std::vector<std::vector<float>> inputs;
    for (long k = b0; k < b1; ++k) inputs.push_back(stacking::assemble_input(series, elevation, cfg.norm, tc, first + k));
    const std::size_t ch = inputs.front().size() / plane;
    nn::Tensor4<float> x(inputs.size(), ch, series.n_lat(), series.n_lon());
    for (std::size_t b = 0; b < inputs.size(); ++b) std::memcpy(x.plane(b, 0), inputs[b].data(), inputs[b].size() * sizeof(float));
    const auto p = net.forward(x);
    for (std::size_t b = 0; b < inputs.size(); ++b) {
      std::vector<double> v(plane);
      const float* pp = p.plane(b, 0);
      for (std::size_t k = 0; k < plane; ++k) v[k] = cfg.norm.denormalize(pp[k]);
      out.emplace_back(series.n_lat(), series.n_lon(), std::move(v));
    }
  }
  net.clear_cache();
  net.set_training(was_training);
  return GridSeries(range.first, std::move(out));
}

GridField predict(model::Model& net, const GridSeries& series, const dataio::ElevationField* elevation,
                  MonthStamp target) {
  return predict_range(net, series, elevation, MonthRange{target, target}, 1)[0];
}

GridField predict(const model::Checkpoint& ckpt, const GridSeries& series, const dataio::ElevationField* elevation,
                  MonthStamp target) {
  model::Model net = model::from_checkpoint(ckpt);
  return predict(net, series, elevation, target);
}

std::string format_epoch_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch %d lr %.6g train_mse %.6g val_mse %.6g val_mae_c %.6g", r.epoch,
                r.learning_rate, r.train_mse, r.val_mse, r.val_mae_c);
  return buf;
}

void write_history(const TrainHistory& h, const std::filesystem::path& path) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : h.epochs) {
    epochs.push_back({{"epoch", r.epoch},
                      {"learning_rate", r.learning_rate},
                      {"train_mse", r.train_mse},
                      {"val_mse", r.val_mse},
                      {"val_mae_c", r.val_mae_c}});
  }
  nlohmann::json j{{"epochs", epochs},
                   {"best_epoch", h.best_epoch},
                   {"best_validation_loss", h.best_validation_loss},
                   {"stopped_early", h.stopped_early}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace seasonet::training
