#pragma once

// Experiment runner: trains (strategy, seed, learning-rate) combinations
// from shared per-seed initial weights, picks the epoch with the best
// target-dev F-score, and evaluates it on the target test split.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loant/data.hpp"
#include "loant/metrics.hpp"
#include "loant/train.hpp"

namespace loant {

struct Evaluation {
  FScore score;
  double loss = 0.0;
};

std::vector<int> predict(const ModelParams& params, const std::vector<Example>& examples,
                         Domain domain);
Evaluation evaluate(const ModelParams& params, const std::vector<Example>& examples,
                    Domain domain);

/// Source and target data ready for training: trimmed, de-duplicated and
/// with the target train split class-balanced.
DomainPair prepare_pair(const DomainPair& raw, std::uint64_t seed);

struct MetricsReport {
  Strategy strategy = Strategy::kAnt;
  std::uint64_t seed = 0;
  double lr = 0.0;
  FScore dev;
  FScore test;
  std::size_t epoch = 0;  // selected checkpoint
  double wall_ms = 0.0;
  std::size_t aux_state = 0;
  bool failed = false;
  std::string error;
  std::vector<EpochReport> epochs;
};

struct RunOptions {
  ModelConfig model;
  TrainingConfig training;  // strategy and lr are overwritten per run
  /// Called after every epoch (used for run logs).
  std::function<void(const EpochReport&)> on_epoch;
};

/// Trains one strategy from ModelParams::init(model, seed) and selects by
/// target-dev F. A diverging run comes back with failed = true.
MetricsReport train_and_select(Strategy strategy, const DomainPair& data, double lr,
                               std::uint64_t seed, const RunOptions& options,
                               ModelParams* final_params = nullptr);

struct SequentialResult {
  ModelParams params;
  std::size_t phase1_epoch = 0;
  std::size_t phase2_epoch = 0;
  std::vector<EpochReport> phase1;
  std::vector<EpochReport> phase2;
  std::vector<double> phase2_dev_loss;  // target dev loss after each phase-2 epoch
};

/// Source-only training with source-dev selection, then target-only training
/// with target-dev selection. The encoder carries over; the target head and
/// shared layer are reset to their seed-`head_seed` initialization.
SequentialResult sequential_finetune(const ModelParams& params, const DomainPair& data,
                                     const TrainingConfig& config, std::size_t phase1_epochs,
                                     std::uint64_t head_seed);

struct ExperimentSpec {
  std::vector<Strategy> strategies;
  std::vector<std::uint64_t> seeds;
  std::vector<double> lr_grid;
  ModelConfig model;
  TrainingConfig training;
  std::optional<GeneratorConfig> generator;
  std::filesystem::path source_path;
  std::filesystem::path target_path;
  std::filesystem::path output_dir;

  void validate() const;
  static ExperimentSpec from_json(const std::string& text);
  static ExperimentSpec defaults();
};

/// Strategy whose tuned learning rate a strategy inherits, if any.
std::optional<Strategy> lr_parent(Strategy s);

/// Scalars resident for latents plus any parameter-space look-ahead copy;
/// ratios against ANT give the relative-memory column.
double resource_footprint(Strategy s, std::size_t batch, std::size_t latent,
                          std::size_t encoder_scalars);

struct SummaryRow {
  Strategy strategy;
  std::uint64_t seed;
  double dev_f, test_f, test_r, test_p;
  std::size_t epoch;
  double wall_ms;
  std::size_t aux_state;
  double rel_time, rel_state;
};

struct Comparison {
  Strategy treated;
  Strategy baseline;
  double mean_diff = 0.0;
  SignTest test;
};

struct ExperimentResult {
  std::vector<MetricsReport> reports;  // one per (strategy, seed)
  std::vector<SummaryRow> summary;
  std::map<Strategy, double> selected_lr;
  std::vector<Comparison> comparisons;
  std::vector<MetricsReport> grid_runs;  // every tuning run
  bool any_failed() const;
};

/// Worker count from LOANT_THREADS (default: hardware concurrency).
std::size_t worker_threads();

ExperimentResult run_experiment(const ExperimentSpec& spec, const DomainPair& prepared);

std::string to_json_line(const MetricsReport& report);
std::string summary_csv(const std::vector<SummaryRow>& rows);
/// Writes reports.jsonl, summary.csv, comparisons.csv and runs/*.jsonl.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace loant
