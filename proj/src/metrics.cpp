#include "loant/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "loant/tensor.hpp"

namespace loant {

FScore f_score(std::span<const int> predictions, std::span<const int> labels, int positive) {
  if (predictions.size() != labels.size())
    throw Error("f_score: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(labels.size()) + " labels");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("f_score: labels must be binary");
    const bool pred = predictions[i] == positive;
    const bool gold = labels[i] == positive;
    tp += pred && gold;
    fp += pred && !gold;
    fn += !pred && gold;
  }
  FScore s;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double denom = s.precision + s.recall;
  s.f = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

std::size_t select_model(std::span<const double> dev_scores) {
  if (dev_scores.empty()) throw Error("select_model: no checkpoints");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dev_scores.size(); ++i)
    if (dev_scores[i] > dev_scores[best]) best = i;
  return best;
}

SignTest paired_sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("paired_sign_test: unequal sample sizes");
  SignTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) ++t.wins;
    else if (a[i] < b[i]) ++t.losses;
    else ++t.ties;
  }
  const std::size_t n = t.wins + t.losses;
  if (n == 0) return t;
  const std::size_t k = std::min(t.wins, t.losses);
  // P(X <= k) for X ~ Binomial(n, 1/2), doubled and capped at 1.
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) -
                              std::lgamma(static_cast<double>(i) + 1.0) -
                              std::lgamma(static_cast<double>(n - i) + 1.0);
    tail += std::exp(log_choose - static_cast<double>(n) * std::log(2.0));
  }
  t.p_value = std::min(1.0, 2.0 * tail);
  return t;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two equal-length samples");
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace loant
