#include "loant/optim.hpp"

#include <cmath>
#include <numbers>

#include "loant/kernels.hpp"

namespace loant {

ParamGrads zero_grads(const ModelParams& params) {
  ParamGrads g;
  g.reserve(params.size());
  for (const Param& p : params) g.emplace_back(p.value.shape());
  return g;
}

Adam::Adam(const ModelParams& params, AdamConfig config) : config_(config) {
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0))
    throw Error("Adam: betas must lie in [0,1)");
  if (!(config.eps > 0.0)) throw Error("Adam: eps must be positive");
  for (const Param& p : params) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

void Adam::step(ModelParams& params, const ParamGrads& grads, double lr) {
  if (grads.size() != params.size() || m_.size() != params.size())
    throw ShapeError("Adam: gradient count does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!grads[i].same_shape(params[i].value))
      throw ShapeError("Adam: gradient for " + params[i].name + " has shape " +
                       shape_string(grads[i].shape()) + ", expected " +
                       shape_string(params[i].value.shape()));
  ++step_;
  const double t = static_cast<double>(step_);
  const kernels::AdamParams ap{lr,
                               config_.beta1,
                               config_.beta2,
                               config_.eps,
                               1.0 - std::pow(config_.beta1, t),
                               1.0 - std::pow(config_.beta2, t)};
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].value;
    kernels::active().adam(w.size(), w.data().data(), grads[i].data().data(),
                           m_[i].data().data(), v_[i].data().data(), ap);
  }
}

double cosine_lr(std::size_t step, std::size_t total, double base_lr) {
  if (step > total) throw Error("cosine_lr: step beyond schedule length");
  if (total == 0) return base_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace loant
