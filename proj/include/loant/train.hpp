#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "loant/data.hpp"
#include "loant/strategies.hpp"

namespace loant {

struct TrainingConfig {
  Strategy strategy = Strategy::kLoant;
  double lr = 3e-3;
  double gamma = 1.0;  // latent / look-ahead step size
  std::size_t batch_size = 128;
  std::size_t epochs = 5;
  AdamConfig adam;
  GrlSchedule grl;
  /// Pins the reversal weight instead of following the schedule.
  std::optional<double> fixed_lambda;
  std::uint64_t seed = 1;  // data order

  void validate() const;
};

struct EpochReport {
  std::size_t epoch = 0;
  Strategy strategy = Strategy::kAnt;
  std::vector<StepLosses> batches;
  StepLosses mean;
  double lr = 0.0;  // rate used on the epoch's last step
  double wall_ms = 0.0;
  std::size_t aux_state_scalars = 0;  // peak over the epoch
};

struct TrainingDiverged : NonFiniteError {
  using NonFiniteError::NonFiniteError;
};

/// Paired source/target training loop. Each epoch visits N batch pairs where
/// N is the larger loader's batch count; the shorter loader wraps around.
/// One Adam instance updates every parameter group with a cosine-decayed
/// rate over the whole run.
class Trainer {
 public:
  Trainer(ModelParams& params, std::vector<Example> source_train,
          std::vector<Example> target_train, TrainingConfig config);

  EpochReport run_epoch();
  std::size_t epochs_done() const { return epoch_; }
  std::size_t batches_per_epoch() const { return batches_per_epoch_; }
  std::size_t total_steps() const { return batches_per_epoch_ * config_.epochs; }
  const TrainingConfig& config() const { return config_; }

 private:
  ModelParams& params_;
  TrainingConfig config_;
  std::optional<BatchLoader> source_;
  std::optional<BatchLoader> target_;
  Adam adam_;
  std::size_t batches_per_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
};

/// Runs one epoch of `trainer`; free-function form of Trainer::run_epoch.
EpochReport train_epoch(Trainer& trainer);

std::string to_json_line(const EpochReport& report);

}  // namespace loant
