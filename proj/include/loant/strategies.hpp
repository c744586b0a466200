#pragma once

// Per-batch gradient rules for every training strategy: adversarial transfer
// (ANT), its latent-optimized form (LOANT), multi-task learning with and
// without latent optimization, a first-order MAML-style encoder look-ahead
// (ANT+MAML), and the single-domain objectives used by sequential
// fine-tuning. All look-ahead variants are first-order: the look-ahead
// displacement enters the graph as a detached constant.

#include <functional>
#include <span>
#include <string_view>

#include "loant/optim.hpp"

namespace loant {

enum class Strategy : std::uint8_t {
  kAnt,
  kLoant,
  kMtl,
  kMtlLo,
  kAntMaml,
  kSeqFinetune,
  kSourceOnly,
  kTargetOnly,
};

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
bool is_adversarial(Strategy s);

/// z + step * grad, elementwise.
Tensor look_ahead(const Tensor& z, const Tensor& grad, double step);

/// Original latents and their look-ahead versions on one tape.
struct LatentPair {
  NodeId z_s, z_t;
  NodeId z_s_next, z_t_next;
  double gamma = 0.0;
};

/// z' = z + gamma * dL_d/dz for both domains: one descent step on -L_d.
LatentPair latent_step(Tape& tape, NodeId z_s, NodeId z_t, NodeId loss_d, double gamma);
/// z' = z - gamma * dL/dz with each domain's own task loss.
LatentPair mtl_lo_step(Tape& tape, NodeId z_s, NodeId z_t, NodeId loss_s, NodeId loss_t,
                       double gamma);

struct StepLosses {
  double source = 0.0;
  double target = 0.0;
  double domain = 0.0;
  double joint = 0.0;
};

struct StepResult {
  ParamGrads grads;
  StepLosses losses;
  std::size_t aux_state = 0;  // transient look-ahead scalars held for the step
};

/// Gradients of one training step under `strategy`. `lambda` is the reversal
/// weight on the discriminator input (ignored by non-adversarial strategies).
StepResult step_gradients(Strategy strategy, const ModelParams& params,
                          const LabeledBatch& source, const LabeledBatch& target, double gamma,
                          double lambda);

/// L_s(z_s') + L_t(z_t') - L_d(z_s, z_t).
double lo_joint_loss(const ModelParams& params, const LabeledBatch& source,
                     const LabeledBatch& target, double gamma, double lambda);

ParamGrads loant_grads(const ModelParams& params, const LabeledBatch& source,
                       const LabeledBatch& target, double gamma, double lambda);

/// Copy of `params` with the encoder moved to w_b + gamma * dL_d/dw_b.
ModelParams maml_lookahead_step(const ModelParams& params, const LabeledBatch& source,
                                const LabeledBatch& target, double gamma);

/// Builds a scalar task loss from a parameter leaf.
using TaskLoss = std::function<NodeId(Tape&, NodeId)>;

/// First-order MAML: per task w_k = w - gamma dL_k/dw, then
/// w <- w - eta * mean_k dL_k/dw evaluated at w_k.
Tensor maml_meta_update(const Tensor& w, std::span<const TaskLoss> tasks, double gamma,
                        double eta);

/// Sum of squared gradient entries per parameter group.
std::array<double, kParamGroupCount> group_sq_norms(const ModelParams& params,
                                                    const ParamGrads& grads);

}  // namespace loant
