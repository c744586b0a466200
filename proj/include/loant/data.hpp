#pragma once

// Synthetic two-domain text classification data, the preprocessing applied
// before training (trim, de-duplication, class upsampling), unigram
// statistics, and the JSON-lines dataset file format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "loant/model.hpp"

namespace loant {

enum class Split : std::uint8_t { kTrain, kDev, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct Example {
  std::vector<std::uint32_t> tokens;
  int label = 0;
  Split split = Split::kTrain;
  friend bool operator==(const Example&, const Example&) = default;
};

struct DomainDataset {
  std::string domain;
  std::size_t vocab_size = 0;
  std::uint64_t seed = 0;
  std::vector<Example> examples;

  std::vector<Example> split(Split s) const;
  std::size_t count(Split s) const;
  /// Fraction of positive labels in split `s` (0 when the split is empty).
  double positive_rate(Split s) const;
  double positive_rate() const;
  friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

struct SplitSizes {
  std::size_t train = 0;  // before the dev split is carved out
  std::size_t test = 0;
};

struct GeneratorConfig {
  std::size_t vocab_size = 3000;
  // Shared signal: predictive of the label identically in both domains.
  std::vector<std::uint32_t> signal_positive;
  std::vector<std::uint32_t> signal_negative;
  // Domain cues: cue_a marks positives in the source and negatives in the
  // target; cue_b the reverse.
  std::vector<std::uint32_t> cue_a;
  std::vector<std::uint32_t> cue_b;
  // Domain-private background vocabularies.
  std::vector<std::uint32_t> source_private;
  std::vector<std::uint32_t> target_private;

  double signal_rate = 0.3;    // per-token probability of a signal token
  double signal_purity = 0.95; // P(signal token agrees with the label)
  double cue_share = 0.3;      // per-token probability of a domain token
  double cue_fraction = 0.5;   // share of domain tokens that are cues
  double cue_purity = 0.9;
  std::size_t min_length = 8;
  std::size_t max_length = 24;
  SplitSizes source_sizes{2400, 600};
  SplitSizes target_sizes{800, 600};
  double source_positive_rate = 0.5;
  double target_positive_rate = 0.18;
  double dev_fraction = 0.1;
  std::size_t max_len = 100;  // trim length applied after generation
  std::uint64_t seed = 1;

  /// Token sets laid out at the bottom of the vocabulary, sizes in arguments.
  static GeneratorConfig with_token_sets(std::size_t vocab_size, std::size_t signal_per_class,
                                         std::size_t cue_per_set, std::size_t private_per_domain);
  static GeneratorConfig defaults();
  void validate() const;
};

struct DomainPair {
  DomainDataset source;
  DomainDataset target;
};

/// Deterministic under config.seed. Output is already trimmed and
/// de-duplicated within and across the two domains.
DomainPair generate_domain_pair(const GeneratorConfig& config);

/// Truncates every sequence to max_len tokens, then drops repeated
/// sequences keeping the first occurrence.
DomainDataset dedup_and_trim(const DomainDataset& dataset, std::size_t max_len);
/// As above for both datasets, additionally removing from `target` any
/// sequence that also occurs in `source`.
void dedup_and_trim(DomainDataset& source, DomainDataset& target, std::size_t max_len);

/// Tops up each class of the train split with replacement draws until it
/// holds `to_size` examples. Other splits are untouched.
DomainDataset upsample(const DomainDataset& dataset, std::size_t to_size, std::uint64_t seed);
/// upsample() to the size of the larger train class.
DomainDataset balance_classes(const DomainDataset& dataset, std::uint64_t seed);

class UnigramModel {
 public:
  explicit UnigramModel(const DomainDataset& dataset);
  UnigramModel(std::vector<std::size_t> counts);

  std::size_t vocab_size() const { return counts_.size(); }
  std::size_t count(std::uint32_t token) const;
  std::size_t total() const { return total_; }
  double probability(std::uint32_t token) const;

 private:
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

/// sum_g P_t(g) ln(P_t(g) / P_s(g)) over tokens seen in both corpora, with
/// both distributions renormalized over that overlap.
double unigram_kl(const UnigramModel& source, const UnigramModel& target);
double unigram_kl(const DomainDataset& source, const DomainDataset& target);

/// Shuffled fixed-size batches over a list of examples; the final partial
/// batch is dropped. Epoch e uses its own permutation derived from the seed.
class BatchLoader {
 public:
  BatchLoader(std::vector<Example> examples, std::size_t batch_size, std::uint64_t seed);

  std::size_t batch_size() const { return batch_size_; }
  std::size_t batches_per_epoch() const { return examples_.size() / batch_size_; }
  std::size_t size() const { return examples_.size(); }
  LabeledBatch batch(std::size_t epoch, std::size_t index) const;

 private:
  std::vector<Example> examples_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  mutable std::size_t cached_epoch_ = SIZE_MAX;
  mutable std::vector<std::size_t> order_;
};

LabeledBatch to_batch(const std::vector<Example>& examples);

void write_dataset(std::ostream& os, const DomainDataset& dataset);
DomainDataset read_dataset(std::istream& is);
void save_dataset(const std::filesystem::path& path, const DomainDataset& dataset);
DomainDataset load_dataset(const std::filesystem::path& path);

}  // namespace loant
