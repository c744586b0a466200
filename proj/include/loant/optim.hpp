#pragma once

#include <vector>

#include "loant/model.hpp"

namespace loant {

/// One gradient tensor per ModelParams entry, same order and shapes.
using ParamGrads = std::vector<Tensor>;

ParamGrads zero_grads(const ModelParams& params);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam holding one moment pair per parameter tensor. A single
/// instance serves every parameter group, discriminator included.
class Adam {
 public:
  Adam(const ModelParams& params, AdamConfig config = {});

  void step(ModelParams& params, const ParamGrads& grads, double lr);
  std::size_t steps() const { return step_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_ = 0;
};

/// eta0 * (1 + cos(pi * t / T)) / 2 for 0 <= t <= T.
double cosine_lr(std::size_t step, std::size_t total, double base_lr);

}  // namespace loant
