#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "loant/data.hpp"
#include "loant/metrics.hpp"
#include "support.hpp"

using namespace loant;

namespace {

DomainDataset make(std::vector<std::vector<std::uint32_t>> seqs, std::vector<int> labels,
                   Split split = Split::kTrain) {
  DomainDataset d;
  d.domain = "toy";
  d.vocab_size = 1000;
  for (std::size_t i = 0; i < seqs.size(); ++i) d.examples.push_back({seqs[i], labels[i], split});
  return d;
}

std::multiset<std::pair<std::vector<std::uint32_t>, int>> bag(const std::vector<Example>& xs) {
  std::multiset<std::pair<std::vector<std::uint32_t>, int>> out;
  for (const Example& e : xs) out.insert({e.tokens, e.label});
  return out;
}

/// Logistic-regression probe over counts of a fixed token set, trained with
/// full-batch gradient descent and class-balanced weights.
struct Probe {
  std::map<std::uint32_t, std::size_t> index;
  std::vector<double> w;  // last entry is the bias

  explicit Probe(const std::vector<std::uint32_t>& tokens) {
    for (std::uint32_t t : tokens) index.emplace(t, index.size());
    w.assign(index.size() + 1, 0.0);
  }

  std::vector<double> features(const Example& e) const {
    std::vector<double> x(w.size(), 0.0);
    x.back() = 1.0;
    for (std::uint32_t t : e.tokens)
      if (auto it = index.find(t); it != index.end()) x[it->second] += 1.0;
    return x;
  }

  double margin(const Example& e) const {
    const auto x = features(e);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s;
  }

  void fit(const std::vector<Example>& train, bool balanced) {
    double pos = 0;
    for (const Example& e : train) pos += e.label;
    const double n = static_cast<double>(train.size());
    const double wp = balanced ? n / (2 * pos) : 1.0, wn = balanced ? n / (2 * (n - pos)) : 1.0;
    for (int it = 0; it < 500; ++it) {
      std::vector<double> g(w.size(), 0.0);
      for (const Example& e : train) {
        const double p = 1.0 / (1.0 + std::exp(-margin(e)));
        const double r = (p - e.label) * (e.label ? wp : wn) / n;
        const auto x = features(e);
        for (std::size_t i = 0; i < w.size(); ++i) g[i] += r * x[i];
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * (g[i] + 1e-4 * w[i]);
    }
  }

  double f1(const std::vector<Example>& test) const {
    std::vector<int> pred, gold;
    for (const Example& e : test) {
      pred.push_back(margin(e) > 0);
      gold.push_back(e.label);
    }
    return f_score(pred, gold).f;
  }
};

std::vector<std::uint32_t> join(const std::vector<std::uint32_t>& a,
                                const std::vector<std::uint32_t>& b) {
  std::vector<std::uint32_t> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

TEST_CASE("generation is deterministic under the seed") {
  const GeneratorConfig cfg = GeneratorConfig::defaults();
  const DomainPair a = generate_domain_pair(cfg), b = generate_domain_pair(cfg);
  CHECK(a.source == b.source);
  CHECK(a.target == b.target);
  GeneratorConfig other = cfg;
  other.seed = 2;
  CHECK_FALSE(generate_domain_pair(other).source == a.source);
}

TEST_CASE("default pair: sizes, rates, lengths, no duplicates") {
  const GeneratorConfig cfg = GeneratorConfig::defaults();
  const DomainPair pair = generate_domain_pair(cfg);
  CHECK(pair.source.domain == "source");
  CHECK(pair.target.domain == "target");
  for (const auto* d : {&pair.source, &pair.target}) {
    const double rate = d == &pair.source ? cfg.source_positive_rate : cfg.target_positive_rate;
    for (Split s : {Split::kTrain, Split::kDev, Split::kTest})
      CHECK(std::abs(d->positive_rate(s) - rate) <= 0.02);
    std::set<std::vector<std::uint32_t>> seen;
    for (const Example& e : d->examples) {
      CHECK(e.tokens.size() <= cfg.max_len);
      CHECK(seen.insert(e.tokens).second);
    }
  }
  // Carved dev split is 10% of train.
  const double dev = static_cast<double>(pair.target.count(Split::kDev));
  CHECK(dev / (dev + static_cast<double>(pair.target.count(Split::kTrain))) ==
        doctest::Approx(0.1).epsilon(0.05));
  // No sequence appears in both domains.
  std::set<std::vector<std::uint32_t>> src;
  for (const Example& e : pair.source.examples) src.insert(e.tokens);
  for (const Example& e : pair.target.examples) CHECK_FALSE(src.contains(e.tokens));
}

TEST_CASE("generator configs are validated") {
  GeneratorConfig c = GeneratorConfig::defaults();
  c.cue_a.push_back(c.signal_positive.front());
  CHECK_THROWS_AS(generate_domain_pair(c), Error);
  c = GeneratorConfig::defaults();
  c.target_positive_rate = 1e-4;
  CHECK_THROWS_AS(generate_domain_pair(c), Error);
  c = GeneratorConfig::defaults();
  c.cue_share = 0.9;
  CHECK_THROWS_AS(generate_domain_pair(c), Error);
  CHECK_THROWS_AS(GeneratorConfig::with_token_sets(100, 20, 20, 20), Error);
}

TEST_CASE("without domain tokens the domains are exchangeable") {
  // The plug-in estimate is biased upwards by about V / 2N, so keep the
  // vocabulary small relative to the corpus.
  GeneratorConfig c = GeneratorConfig::with_token_sets(200, 20, 0, 0);
  c.target_positive_rate = c.source_positive_rate;
  c.target_sizes = c.source_sizes;
  const DomainPair pair = generate_domain_pair(c);
  CHECK(unigram_kl(pair.source, pair.target) < 0.01);
}

TEST_CASE("shared-token probes transfer, cue probes do not") {
  const GeneratorConfig cfg = GeneratorConfig::defaults();
  const DomainPair pair = generate_domain_pair(cfg);
  const auto shared = join(cfg.signal_positive, cfg.signal_negative);
  for (const DomainDataset* d : {&pair.source, &pair.target}) {
    CAPTURE(d->domain);
    Probe p(shared);
    p.fit(d->split(Split::kTrain), true);
    CHECK(p.f1(d->split(Split::kDev)) >= 0.9);
  }
  Probe cue(join(cfg.cue_a, cfg.cue_b));
  cue.fit(pair.source.split(Split::kTrain), false);
  CHECK(cue.f1(pair.source.split(Split::kDev)) >= 0.6);
  CHECK(cue.f1(pair.target.split(Split::kDev)) <= 0.3);
}

TEST_CASE("dedup_and_trim") {
  const DomainDataset clean = make({{1, 2}, {3}, {4, 5, 6}}, {0, 1, 0});
  CHECK(dedup_and_trim(clean, 100) == clean);

  const DomainDataset dup = make({{1, 2}, {7}, {1, 2}}, {0, 1, 1});
  const DomainDataset once = dedup_and_trim(dup, 100);
  REQUIRE(once.examples.size() == 2);
  CHECK(once.examples[0].label == 0);  // first occurrence kept

  std::vector<std::uint32_t> longseq(150);
  for (std::size_t i = 0; i < 150; ++i) longseq[i] = static_cast<std::uint32_t>(i);
  const DomainDataset trimmed = dedup_and_trim(make({longseq}, {1}), 100);
  CHECK(trimmed.examples[0].tokens ==
        std::vector<std::uint32_t>(longseq.begin(), longseq.begin() + 100));

  // Sequences that only differ after the cut collapse.
  std::vector<std::uint32_t> other = longseq;
  other[120] = 999;
  CHECK(dedup_and_trim(make({longseq, other}, {1, 0}), 100).examples.size() == 1);

  const DomainDataset messy = make({{1, 2, 3}, {1, 2, 3}, {4}, {4, 9}}, {0, 0, 1, 1});
  const DomainDataset first = dedup_and_trim(messy, 2);
  CHECK(dedup_and_trim(first, 2) == first);

  DomainDataset s = make({{1, 2}, {3, 4}}, {0, 1});
  DomainDataset t = make({{3, 4}, {5}, {5}}, {1, 0, 0});
  dedup_and_trim(s, t, 100);
  CHECK(s.examples.size() == 2);
  REQUIRE(t.examples.size() == 1);
  CHECK(t.examples[0].tokens == std::vector<std::uint32_t>{5});
}

TEST_CASE("upsample") {
  SUBCASE("10 vs 90 to 90") {
    std::vector<std::vector<std::uint32_t>> seqs;
    std::vector<int> labels;
    for (std::uint32_t i = 0; i < 100; ++i) {
      seqs.push_back({i});
      labels.push_back(i < 10);
    }
    DomainDataset d = make(seqs, labels);
    d.examples.push_back({{500}, 1, Split::kTest});
    const DomainDataset up = upsample(d, 90, 3);
    CHECK(up.count(Split::kTrain) == 180);
    CHECK(std::abs(up.positive_rate(Split::kTrain) - 0.5) <= 1.0 / 180);
    CHECK(up.split(Split::kTest) == d.split(Split::kTest));
    // Originals are all kept.
    const auto before = bag(d.split(Split::kTrain)), after = bag(up.split(Split::kTrain));
    for (const auto& e : before) CHECK(after.contains(e));
    CHECK(balance_classes(d, 3).count(Split::kTrain) == 180);
  }
  SUBCASE("already balanced is a permutation") {
    const DomainDataset d = make({{1}, {2}, {3}, {4}}, {0, 1, 0, 1});
    const DomainDataset up = upsample(d, 2, 9);
    CHECK(bag(up.examples) == bag(d.examples));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(upsample(make({{1}, {2}}, {0, 0}), 5, 1), Error);
    CHECK_THROWS_AS(upsample(make({{1}, {2}, {3}}, {0, 0, 1}), 1, 1), Error);
  }
}

TEST_CASE("unigram KL") {
  SUBCASE("identical corpora") {
    const DomainDataset d = make({{1, 2, 2, 3}, {3, 4}}, {0, 1});
    CHECK(std::abs(unigram_kl(d, d)) < 1e-12);
  }
  SUBCASE("hand example and asymmetry") {
    const UnigramModel pt(std::vector<std::size_t>{1, 1});
    const UnigramModel ps(std::vector<std::size_t>{1, 3});
    const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(std::abs(unigram_kl(ps, pt) - expected) < 1e-12);
    CHECK(std::abs(unigram_kl(ps, pt) - 0.14384) < 1e-5);
    CHECK(unigram_kl(pt, ps) != doctest::Approx(unigram_kl(ps, pt)));
  }
  SUBCASE("only the overlap counts, renormalized") {
    // Token 2 is target-only; over {0,1} both are uniform.
    const UnigramModel s(std::vector<std::size_t>{5, 5, 0});
    const UnigramModel t(std::vector<std::size_t>{2, 2, 7});
    CHECK(std::abs(unigram_kl(s, t)) < 1e-12);
  }
  SUBCASE("empty overlap") {
    const UnigramModel s(std::vector<std::size_t>{1, 0});
    const UnigramModel t(std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(unigram_kl(s, t), Error);
  }
  SUBCASE("non-negative on random count vectors") {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      std::vector<std::size_t> a(20), b(20);
      for (auto& x : a) x = rng.below(5);
      for (auto& x : b) x = rng.below(5);
      a[0] = b[0] = 1;
      CHECK(unigram_kl(UnigramModel(a), UnigramModel(b)) >= -1e-15);
    }
  }
  SUBCASE("probabilities sum to one") {
    const DomainPair pair = generate_domain_pair(GeneratorConfig::defaults());
    const UnigramModel m(pair.target);
    double total = 0.0;
    for (std::uint32_t g = 0; g < m.vocab_size(); ++g) total += m.probability(g);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("KL grows with the share of domain tokens") {
  const std::vector<double> shares{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<double> kl;
    for (double share : shares) {
      GeneratorConfig c = GeneratorConfig::defaults();
      c.seed = seed;
      c.cue_share = share;
      kl.push_back(unigram_kl(generate_domain_pair(c).source, generate_domain_pair(c).target));
    }
    CAPTURE(seed);
    CHECK(spearman(shares, kl) > 0.9);
  }
}

TEST_CASE("batch loader") {
  const DomainPair pair = generate_domain_pair(GeneratorConfig::defaults());
  const auto train = pair.target.split(Split::kTrain);
  const BatchLoader loader(train, 32, 5);
  CHECK(loader.batches_per_epoch() == train.size() / 32);
  const LabeledBatch a = loader.batch(0, 0);
  CHECK(a.size() == 32);
  CHECK(*loader.batch(0, 0).tokens == *a.tokens);
  CHECK_FALSE(*loader.batch(1, 0).tokens == *a.tokens);
  // One epoch visits distinct examples.
  std::set<std::vector<std::uint32_t>> seen;
  for (std::size_t b = 0; b < loader.batches_per_epoch(); ++b) {
    const LabeledBatch batch = loader.batch(0, b);
    for (const auto& seq : *batch.tokens) CHECK(seen.insert(seq).second);
  }
  CHECK_THROWS_AS(BatchLoader({}, 4, 1), Error);
  CHECK_THROWS_AS(BatchLoader(train, 0, 1), Error);
}

TEST_CASE("dataset file round trip") {
  const DomainPair pair = generate_domain_pair(GeneratorConfig::defaults());
  std::stringstream ss;
  write_dataset(ss, pair.target);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header.find("\"vocab_size\"") != std::string::npos);
  CHECK(read_dataset(ss) == pair.target);

  std::stringstream bad("{\"domain\":\"x\",\"vocab_size\":10,\"seed\":1}\n{\"tokens\":[1],\"label\":2,\"split\":\"train\"}\n");
  CHECK_THROWS_AS(read_dataset(bad), Error);
  std::stringstream empty("");
  CHECK_THROWS_AS(read_dataset(empty), Error);
  std::stringstream bad_split("{\"domain\":\"x\",\"vocab_size\":10,\"seed\":1}\n{\"tokens\":[1],\"label\":1,\"split\":\"holdout\"}\n");
  CHECK_THROWS_AS(read_dataset(bad_split), Error);
}
