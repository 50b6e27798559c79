#pragma once

// Mini-batch Adam training on the MSE objective with step learning-rate decay,
// per-epoch validation, best-epoch selection and early stopping.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seasonet/model.hpp"
#include "seasonet/nn/optim.hpp"
#include "seasonet/stacking.hpp"

namespace seasonet::training {

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1e-3;
  int epochs = 40;
  int batch_size = 16;
  int step_size_epochs = 10;
  double lr_factor = 0.1;
  int early_stop_patience = 5;  // 0 disables early stopping
  std::uint64_t seed = 0;
  bool shuffle = true;
  nn::AdamConfig adam_defaults{};  // beta1, beta2, epsilon

  void validate() const;
  nn::AdamConfig adam() const;
  nn::StepLR scheduler() const { return {learning_rate, step_size_epochs, lr_factor}; }
  std::map<std::string, double> as_map() const;
};

struct EpochRecord {
  int epoch = 0;  // 0 = evaluation before any update
  double learning_rate = 0.0;
  double train_mse = 0.0;  // normalized units; epoch 0 is an eval-mode pass
  double val_mse = 0.0;    // normalized units, eval mode
  double val_mae_c = 0.0;  // degC, eval mode
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  bool stopped_early = false;
};

/// Tracks the best validation loss and counts non-improving epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when `val_loss` is a new strict minimum.
  bool observe(int epoch, double val_loss);
  bool should_stop() const { return patience_ > 0 && bad_epochs_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  int best_epoch_ = -1;
  double best_loss_ = 0.0;
};

struct TrainResult {
  model::Checkpoint checkpoint;  // parameters of the best epoch
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `net` in place. On return `net` holds the best-epoch parameters.
TrainResult train(model::Model& net, std::span<const stacking::Sample> train_samples,
                  std::span<const stacking::Sample> val_samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Continues training from `ckpt` with its frozen normalization statistics.
TrainResult finetune(const model::Checkpoint& ckpt, std::span<const stacking::Sample> finetune_samples,
                     std::span<const stacking::Sample> val_samples, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

struct EvalLoss {
  double mse = 0.0;    // normalized units
  double mae_c = 0.0;  // degC, mean of per-sample grid MAE
};

/// Eval-mode loss over `samples` (no parameter or statistics changes).
EvalLoss evaluate_loss(model::Model& net, std::span<const stacking::Sample> samples, int batch_size = 16);

nn::Tensor4<float> input_batch(std::span<const stacking::Sample> samples, std::span<const std::size_t> order);
nn::Tensor4<float> target_batch(std::span<const stacking::Sample> samples, std::span<const std::size_t> order,
                                const dataio::NormStats& norm);

/// Eval-mode forecast of `target` in degC from the months before it.
GridField predict(model::Model& net, const GridSeries& series, const dataio::ElevationField* elevation,
                  MonthStamp target);
GridField predict(const model::Checkpoint& ckpt, const GridSeries& series, const dataio::ElevationField* elevation,
                  MonthStamp target);

/// Forecasts for every month in `range`, batched.
GridSeries predict_range(model::Model& net, const GridSeries& series, const dataio::ElevationField* elevation,
                         MonthRange range, int batch_size = 16);

/// "epoch lr train_mse val_mse" log line.
std::string format_epoch_line(const EpochRecord& r);
void write_history(const TrainHistory& h, const std::filesystem::path& path);

}  // namespace seasonet::training
