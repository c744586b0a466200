#include "loant/train.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace loant {

void TrainingConfig::validate() const {
  if (!(lr > 0.0)) throw Error("training: learning rate must be > 0");
  if (!(gamma >= 0.0)) throw Error("training: gamma must be >= 0");
  if (batch_size == 0) throw Error("training: batch size must be >= 1");
  if (fixed_lambda && *fixed_lambda < 0.0) throw Error("training: lambda must be >= 0");
  if (strategy == Strategy::kSeqFinetune)
    throw Error("training: SEQ-FINETUNE runs as two single-domain phases");
}

Trainer::Trainer(ModelParams& params, std::vector<Example> source_train,
                 std::vector<Example> target_train, TrainingConfig config)
    : params_(params), config_(std::move(config)), adam_(params, config_.adam) {
  config_.validate();
  const bool use_source = config_.strategy != Strategy::kTargetOnly;
  const bool use_target = config_.strategy != Strategy::kSourceOnly;
  std::size_t batch = config_.batch_size;
  if (use_source) {
    if (source_train.empty()) throw Error("training: empty source loader");
    batch = std::min(batch, source_train.size());
  }
  if (use_target) {
    if (target_train.empty()) throw Error("training: empty target loader");
    batch = std::min(batch, target_train.size());
  }
  // Both sides use the same batch size so the discriminator sees B + B rows.
  if (use_source) source_.emplace(std::move(source_train), batch, config_.seed * 2 + 0);
  if (use_target) target_.emplace(std::move(target_train), batch, config_.seed * 2 + 1);
  batches_per_epoch_ = std::max(source_ ? source_->batches_per_epoch() : 0,
                                target_ ? target_->batches_per_epoch() : 0);
}

EpochReport Trainer::run_epoch() {
  const auto start = std::chrono::steady_clock::now();
  EpochReport report;
  report.epoch = epoch_;
  report.strategy = config_.strategy;
  const std::size_t total = total_steps();
  // Single-domain strategies pass the unused side's batch along untouched.
  const BatchLoader& any = source_ ? *source_ : *target_;

  for (std::size_t i = 0; i < batches_per_epoch_; ++i) {
    // Wrap-around index for the shorter loader: continue through its epochs.
    auto fetch = [&](const std::optional<BatchLoader>& loader) {
      const BatchLoader& l = loader ? *loader : any;
      const std::size_t global = epoch_ * batches_per_epoch_ + i;
      return l.batch(global / l.batches_per_epoch(), global % l.batches_per_epoch());
    };
    const LabeledBatch s = fetch(source_);
    const LabeledBatch t = fetch(target_);
    const double progress =
        total ? std::min(1.0, static_cast<double>(step_) / static_cast<double>(total)) : 1.0;
    const double lambda = config_.fixed_lambda ? *config_.fixed_lambda : config_.grl(progress);
    const double lr = cosine_lr(std::min(step_, total), total, config_.lr);

    StepResult r = step_gradients(config_.strategy, params_, s, t, config_.gamma, lambda);
    const StepLosses& l = r.losses;
    if (!std::isfinite(l.source) || !std::isfinite(l.target) || !std::isfinite(l.domain)) {
      std::ostringstream os;
      os << strategy_name(config_.strategy) << ": non-finite loss at epoch " << epoch_
         << " batch " << i << " (L_s=" << l.source << " L_t=" << l.target
         << " L_d=" << l.domain << ")";
      throw TrainingDiverged(os.str());
    }
    adam_.step(params_, r.grads, lr);
    if (!params_.all_finite())
      throw TrainingDiverged(std::string(strategy_name(config_.strategy)) +
                             ": parameters became non-finite at epoch " +
                             std::to_string(epoch_) + " batch " + std::to_string(i));

    report.batches.push_back(l);
    report.mean.source += l.source;
    report.mean.target += l.target;
    report.mean.domain += l.domain;
    report.mean.joint += l.joint;
    report.lr = lr;
    report.aux_state_scalars = std::max(report.aux_state_scalars, r.aux_state);
    ++step_;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, batches_per_epoch_));
  report.mean.source /= n;
  report.mean.target /= n;
  report.mean.domain /= n;
  report.mean.joint /= n;
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  ++epoch_;
  return report;
}

EpochReport train_epoch(Trainer& trainer) { return trainer.run_epoch(); }

std::string to_json_line(const EpochReport& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["strategy"] = strategy_name(r.strategy);
  j["losses"] = {{"L_s", r.mean.source},
                 {"L_t", r.mean.target},
                 {"L_d", r.mean.domain},
                 {"joint", r.mean.joint}};
  j["lr"] = r.lr;
  j["wall_ms"] = r.wall_ms;
  j["aux_state_scalars"] = r.aux_state_scalars;
  return j.dump();
}

}  // namespace loant
