#include "loant/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

#include "loant/rng.hpp"

namespace loant {

using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw Error("unknown split '" + std::string(s) + "'");
}

std::vector<Example> DomainDataset::split(Split s) const {
  std::vector<Example> out;
  for (const Example& e : examples)
    if (e.split == s) out.push_back(e);
  return out;
}

std::size_t DomainDataset::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      examples.begin(), examples.end(), [s](const Example& e) { return e.split == s; }));
}

double DomainDataset::positive_rate(Split s) const {
  std::size_t n = 0, pos = 0;
  for (const Example& e : examples)
    if (e.split == s) {
      ++n;
      pos += e.label == 1;
    }
  return n ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;
}

double DomainDataset::positive_rate() const {
  if (examples.empty()) return 0.0;
  const auto pos = std::count_if(examples.begin(), examples.end(),
                                 [](const Example& e) { return e.label == 1; });
  return static_cast<double>(pos) / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------
// Generation

GeneratorConfig GeneratorConfig::with_token_sets(std::size_t vocab_size,
                                                 std::size_t signal_per_class,
                                                 std::size_t cue_per_set,
                                                 std::size_t private_per_domain) {
  GeneratorConfig c;
  c.vocab_size = vocab_size;
  std::uint32_t next = 0;
  auto take = [&](std::size_t n) {
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), next);
    next += static_cast<std::uint32_t>(n);
    return ids;
  };
  c.signal_positive = take(signal_per_class);
  c.signal_negative = take(signal_per_class);
  c.cue_a = take(cue_per_set);
  c.cue_b = take(cue_per_set);
  c.source_private = take(private_per_domain);
  c.target_private = take(private_per_domain);
  if (next >= vocab_size) throw Error("token sets exhaust the vocabulary");
  return c;
}

GeneratorConfig GeneratorConfig::defaults() { return with_token_sets(3000, 20, 20, 200); }

void GeneratorConfig::validate() const {
  std::set<std::uint32_t> seen;
  for (const auto* set : {&signal_positive, &signal_negative, &cue_a, &cue_b, &source_private,
                          &target_private}) {
    for (std::uint32_t t : *set) {
      if (t >= vocab_size) throw Error("generator: token id outside vocabulary");
      if (!seen.insert(t).second) throw Error("generator: token sets must be disjoint");
    }
  }
  if (seen.size() >= vocab_size) throw Error("generator: no common background tokens left");
  if (signal_positive.empty() != signal_negative.empty())
    throw Error("generator: signal sets must both be empty or both nonempty");
  if (cue_a.empty() != cue_b.empty())
    throw Error("generator: cue sets must both be empty or both nonempty");
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string("generator: ") + what + " outside [0,1]");
  };
  prob(signal_rate, "signal_rate");
  prob(signal_purity, "signal_purity");
  prob(cue_share, "cue_share");
  prob(cue_fraction, "cue_fraction");
  prob(cue_purity, "cue_purity");
  prob(dev_fraction, "dev_fraction");
  if (signal_rate + cue_share > 1.0) throw Error("generator: signal_rate + cue_share > 1");
  if (min_length == 0 || min_length > max_length) throw Error("generator: bad length range");
  for (const SplitSizes* s : {&source_sizes, &target_sizes})
    if (s->train == 0 || s->test == 0) throw Error("generator: split sizes must be >= 1");
  for (double r : {source_positive_rate, target_positive_rate}) {
    if (!(r > 0.0 && r < 1.0)) throw Error("generator: positive rate must lie in (0,1)");
  }
  for (const SplitSizes* s : {&source_sizes, &target_sizes}) {
    const double rate = s == &source_sizes ? source_positive_rate : target_positive_rate;
    for (std::size_t n : {s->train, s->test}) {
      const auto pos = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
      if (pos == 0 || pos == n)
        throw Error("generator: positive rate unreachable with split size " + std::to_string(n));
    }
  }
}

namespace {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::uint32_t pick(const std::vector<std::uint32_t>& set, Rng& rng) {
  return set[rng.below(set.size())];
}

struct DomainSampler {
  const GeneratorConfig& c;
  Domain domain;
  std::vector<std::uint32_t> background;

  std::vector<std::uint32_t> sentence(int label, Rng& rng) const {
    const std::size_t len = c.min_length + rng.below(c.max_length - c.min_length + 1);
    const auto& priv = domain == Domain::kSource ? c.source_private : c.target_private;
    const bool has_signal = !c.signal_positive.empty();
    const bool has_cues = !c.cue_a.empty();
    std::vector<std::uint32_t> out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      const double r = rng.uniform();
      if (has_signal && r < c.signal_rate) {
        const bool agree = rng.bernoulli(c.signal_purity);
        const bool positive = (label == 1) == agree;
        out.push_back(pick(positive ? c.signal_positive : c.signal_negative, rng));
        continue;
      }
      if (r < c.signal_rate + c.cue_share && (has_cues || !priv.empty())) {
        const bool use_cue = has_cues && (priv.empty() || rng.bernoulli(c.cue_fraction));
        if (use_cue) {
          const bool agree = rng.bernoulli(c.cue_purity);
          // cue_a signals positive in the source and negative in the target.
          const bool positive = (label == 1) == agree;
          const bool use_a = (domain == Domain::kSource) == positive;
          out.push_back(pick(use_a ? c.cue_a : c.cue_b, rng));
        } else {
          out.push_back(pick(priv, rng));
        }
        continue;
      }
      out.push_back(pick(background, rng));
    }
    return out;
  }
};

DomainDataset generate_domain(const GeneratorConfig& c, Domain domain,
                              const std::vector<std::uint32_t>& background) {
  const bool src = domain == Domain::kSource;
  const SplitSizes sizes = src ? c.source_sizes : c.target_sizes;
  const double rate = src ? c.source_positive_rate : c.target_positive_rate;
  Rng rng(c.seed, src ? "generate/source" : "generate/target");
  DomainSampler sampler{c, domain, background};

  DomainDataset d;
  d.domain = src ? "source" : "target";
  d.vocab_size = c.vocab_size;
  d.seed = c.seed;

  auto emit = [&](std::size_t n, bool test_split) {
    const auto pos = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
    std::vector<int> labels(n, 0);
    std::fill_n(labels.begin(), pos, 1);
    shuffle(labels, rng);
    std::vector<Example> out;
    for (int y : labels) out.push_back(Example{sampler.sentence(y, rng), y, Split::kTest});
    if (test_split) return out;
    // Stratified dev split so both classes keep the declared rate.
    for (int cls : {0, 1}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i].label == cls) idx.push_back(i);
      shuffle(idx, rng);
      const auto dev = static_cast<std::size_t>(
          std::llround(c.dev_fraction * static_cast<double>(idx.size())));
      for (std::size_t k = 0; k < idx.size(); ++k)
        out[idx[k]].split = k < dev ? Split::kDev : Split::kTrain;
    }
    return out;
  };
  for (Example& e : emit(sizes.train, false)) d.examples.push_back(std::move(e));
  for (Example& e : emit(sizes.test, true)) d.examples.push_back(std::move(e));
  return d;
}

}  // namespace

DomainPair generate_domain_pair(const GeneratorConfig& config) {
  config.validate();
  std::vector<bool> reserved(config.vocab_size, false);
  for (const auto* set : {&config.signal_positive, &config.signal_negative, &config.cue_a,
                          &config.cue_b, &config.source_private, &config.target_private})
    for (std::uint32_t t : *set) reserved[t] = true;
  std::vector<std::uint32_t> background;
  for (std::uint32_t t = 0; t < config.vocab_size; ++t)
    if (!reserved[t]) background.push_back(t);

  DomainPair pair{generate_domain(config, Domain::kSource, background),
                  generate_domain(config, Domain::kTarget, background)};
  dedup_and_trim(pair.source, pair.target, config.max_len);
  return pair;
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {

void trim_and_dedup_into(std::vector<Example>& examples, std::size_t max_len,
                         std::set<std::vector<std::uint32_t>>& seen) {
  std::vector<Example> kept;
  kept.reserve(examples.size());
  for (Example& e : examples) {
    if (e.tokens.size() > max_len) e.tokens.resize(max_len);
    if (seen.insert(e.tokens).second) kept.push_back(std::move(e));
  }
  examples = std::move(kept);
}

}  // namespace

DomainDataset dedup_and_trim(const DomainDataset& dataset, std::size_t max_len) {
  DomainDataset out = dataset;
  std::set<std::vector<std::uint32_t>> seen;
  trim_and_dedup_into(out.examples, max_len, seen);
  return out;
}

void dedup_and_trim(DomainDataset& source, DomainDataset& target, std::size_t max_len) {
  std::set<std::vector<std::uint32_t>> seen;
  trim_and_dedup_into(source.examples, max_len, seen);
  trim_and_dedup_into(target.examples, max_len, seen);
}

DomainDataset upsample(const DomainDataset& dataset, std::size_t to_size, std::uint64_t seed) {
  std::array<std::vector<Example>, 2> classes;
  std::vector<Example> rest;
  for (const Example& e : dataset.examples) {
    if (e.split == Split::kTrain) classes[static_cast<std::size_t>(e.label)].push_back(e);
    else rest.push_back(e);
  }
  for (const auto& c : classes) {
    if (c.empty()) throw Error("upsample: train split has an empty class");
    if (c.size() > to_size)
      throw Error("upsample: class of size " + std::to_string(c.size()) +
                  " exceeds target size " + std::to_string(to_size));
  }
  Rng rng(seed, "upsample");
  std::vector<Example> train;
  for (auto& c : classes) {
    const std::size_t original = c.size();
    for (std::size_t i = original; i < to_size; ++i) c.push_back(c[rng.below(original)]);
    train.insert(train.end(), c.begin(), c.end());
  }
  shuffle(train, rng);
  DomainDataset out = dataset;
  out.examples = std::move(train);
  out.examples.insert(out.examples.end(), rest.begin(), rest.end());
  return out;
}

DomainDataset balance_classes(const DomainDataset& dataset, std::uint64_t seed) {
  std::size_t n[2] = {0, 0};
  for (const Example& e : dataset.examples)
    if (e.split == Split::kTrain) ++n[e.label];
  return upsample(dataset, std::max(n[0], n[1]), seed);
}

// ---------------------------------------------------------------------------
// Unigram statistics

UnigramModel::UnigramModel(const DomainDataset& dataset) : counts_(dataset.vocab_size, 0) {
  for (const Example& e : dataset.examples)
    for (std::uint32_t t : e.tokens) {
      if (t >= counts_.size()) counts_.resize(t + 1, 0);
      ++counts_[t];
      ++total_;
    }
}

UnigramModel::UnigramModel(std::vector<std::size_t> counts) : counts_(std::move(counts)) {
  total_ = std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t UnigramModel::count(std::uint32_t token) const {
  return token < counts_.size() ? counts_[token] : 0;
}

double UnigramModel::probability(std::uint32_t token) const {
  return total_ ? static_cast<double>(count(token)) / static_cast<double>(total_) : 0.0;
}

double unigram_kl(const UnigramModel& source, const UnigramModel& target) {
  const std::size_t v = std::max(source.vocab_size(), target.vocab_size());
  double ps_mass = 0.0, pt_mass = 0.0;
  std::vector<std::uint32_t> overlap;
  for (std::uint32_t g = 0; g < v; ++g) {
    if (source.count(g) > 0 && target.count(g) > 0) {
      overlap.push_back(g);
      ps_mass += static_cast<double>(source.count(g));
      pt_mass += static_cast<double>(target.count(g));
    }
  }
  if (overlap.empty()) throw Error("unigram_kl: the vocabularies do not overlap");
  double kl = 0.0;
  for (std::uint32_t g : overlap) {
    const double pt = static_cast<double>(target.count(g)) / pt_mass;
    const double ps = static_cast<double>(source.count(g)) / ps_mass;
    kl += pt * std::log(pt / ps);
  }
  return kl;
}

double unigram_kl(const DomainDataset& source, const DomainDataset& target) {
  return unigram_kl(UnigramModel(source), UnigramModel(target));
}

// ---------------------------------------------------------------------------
// Batching

BatchLoader::BatchLoader(std::vector<Example> examples, std::size_t batch_size,
                         std::uint64_t seed)
    : examples_(std::move(examples)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ == 0) throw Error("BatchLoader: batch size must be >= 1");
  if (examples_.empty()) throw Error("BatchLoader: no examples");
  batch_size_ = std::min(batch_size_, examples_.size());
}

LabeledBatch BatchLoader::batch(std::size_t epoch, std::size_t index) const {
  if (cached_epoch_ != epoch) {
    order_.resize(examples_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(seed_ ^ (0x9e3779b97f4a7c15ull * (epoch + 1)), "loader");
    shuffle(order_, rng);
    cached_epoch_ = epoch;
  }
  index %= batches_per_epoch();
  TokenBatch tokens;
  std::vector<int> labels;
  for (std::size_t k = index * batch_size_; k < (index + 1) * batch_size_; ++k) {
    tokens.push_back(examples_[order_[k]].tokens);
    labels.push_back(examples_[order_[k]].label);
  }
  return make_batch(std::move(tokens), std::move(labels));
}

LabeledBatch to_batch(const std::vector<Example>& examples) {
  TokenBatch tokens;
  std::vector<int> labels;
  for (const Example& e : examples) {
    tokens.push_back(e.tokens);
    labels.push_back(e.label);
  }
  return make_batch(std::move(tokens), std::move(labels));
}

// ---------------------------------------------------------------------------
// File format

void write_dataset(std::ostream& os, const DomainDataset& d) {
  os << json{{"domain", d.domain}, {"vocab_size", d.vocab_size}, {"seed", d.seed}}.dump() << '\n';
  for (const Example& e : d.examples)
    os << json{{"tokens", e.tokens}, {"label", e.label}, {"split", split_name(e.split)}}.dump()
       << '\n';
}

DomainDataset read_dataset(std::istream& is) {
  DomainDataset d;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!header) {
        d.domain = j.at("domain").get<std::string>();
        d.vocab_size = j.at("vocab_size").get<std::size_t>();
        d.seed = j.value("seed", std::uint64_t{0});
        header = true;
        continue;
      }
      Example e;
      e.tokens = j.at("tokens").get<std::vector<std::uint32_t>>();
      e.label = j.at("label").get<int>();
      if (e.label != 0 && e.label != 1) throw Error("label must be 0 or 1");
      e.split = parse_split(j.at("split").get<std::string>());
      d.examples.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error("dataset line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error("dataset line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (!header) throw Error("dataset file has no header line");
  return d;
}

void save_dataset(const std::filesystem::path& path, const DomainDataset& dataset) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_dataset(os, dataset);
}

DomainDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return read_dataset(is);
}

}  // namespace loant
