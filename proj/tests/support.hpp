#pragma once

#include <cmath>
#include <filesystem>
#include <vector>

#include "loant/model.hpp"
#include "loant/rng.hpp"

namespace loant::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

inline ModelConfig tiny_config(std::size_t vocab = 40, std::size_t embed = 4,
                               std::size_t latent = 4) {
  return ModelConfig{vocab, embed, latent};
}

inline LabeledBatch random_batch(Rng& rng, std::size_t batch, std::size_t vocab,
                                 std::size_t min_len = 2, std::size_t max_len = 6) {
  TokenBatch tokens(batch);
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    for (std::size_t k = 0; k < len; ++k)
      tokens[i].push_back(static_cast<std::uint32_t>(rng.below(vocab)));
    labels[i] = static_cast<int>(rng.below(2));
  }
  return make_batch(std::move(tokens), std::move(labels));
}

/// Parameters with every entry drawn from U(-scale, scale), so that tiny
/// models have gradients of a useful size everywhere.
inline ModelParams random_params(const ModelConfig& cfg, Rng& rng, double scale = 0.8) {
  ModelParams p = ModelParams::zeros(cfg);
  for (Param& q : p)
    for (double& x : q.value.data()) x = rng.uniform(-scale, scale);
  return p;
}

inline double max_abs_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, loant::max_abs_diff(a[i], b[i]));
  return m;
}

inline std::filesystem::path golden_dir() { return LOANT_GOLDEN_DIR; }

}  // namespace loant::testing
