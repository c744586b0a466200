#pragma once

#include <span>
#include <vector>

namespace loant {

struct FScore {
  double f = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// Positive-class precision, recall and their harmonic mean. Any zero
/// denominator yields 0 for the affected quantity.
FScore f_score(std::span<const int> predictions, std::span<const int> labels, int positive = 1);

/// Index of the checkpoint with the highest dev score; earliest wins ties.
std::size_t select_model(std::span<const double> dev_scores);

struct SignTest {
  std::size_t wins = 0;    // a > b
  std::size_t losses = 0;  // a < b
  std::size_t ties = 0;
  double p_value = 1.0;    // two-sided exact binomial, ties dropped
};

SignTest paired_sign_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace loant
