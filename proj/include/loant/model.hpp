#pragma once

// Adversarial neural transfer network: a small trainable sentence encoder,
// source/target/shared dense layers, two task classifiers and a domain
// discriminator fed through a gradient reversal layer.
//
//   tokens -> [encoder] -> z -> [w_s|w_t] -> v ─┐
//                           └-> [w_sh]   -> u ─┴-> [theta_s|theta_t] -> task logits
//                                           u -> grl -> [theta_d] -> domain logits

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "loant/tape.hpp"

namespace loant {

struct ModelConfig {
  std::size_t vocab_size = 3000;
  std::size_t embed_dim = 16;
  std::size_t latent_dim = 32;
};

enum class ParamGroup : std::uint8_t { kEncoder, kShared, kSource, kTarget, kDiscriminator };
inline constexpr std::size_t kParamGroupCount = 5;
std::string_view group_name(ParamGroup g);

enum ParamIndex : std::size_t {
  kEmbedding,
  kEncW1, kEncB1, kEncW2, kEncB2,
  kSharedW, kSharedB,
  kSourceW, kSourceB, kSourceClfW1, kSourceClfB1, kSourceClfW2, kSourceClfB2,
  kTargetW, kTargetB, kTargetClfW1, kTargetClfB1, kTargetClfW2, kTargetClfB2,
  kDiscW1, kDiscB1, kDiscW2, kDiscB2,
  kParamCount,
};

struct Param {
  std::string name;
  ParamGroup group;
  Tensor value;
};

/// All trainable tensors in a fixed order, tagged with their group
/// (w_b, w_sh, phi_s = [w_s, theta_s], phi_t = [w_t, theta_t], theta_d).
class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-valued parameters with the shapes implied by `config`.
  static ModelParams zeros(const ModelConfig& config);
  /// Deterministic initialization. Each tensor draws from its own stream
  /// keyed by (seed, tensor name), so every model variant built from the same
  /// seed starts from bit-identical weights for the components it shares.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t group_scalars(ParamGroup g) const;
  std::size_t total_scalars() const;
  /// Re-draws every tensor in `g` from `seed`.
  void reinit_group(ParamGroup g, std::uint64_t seed);
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&);

 private:
  ModelConfig config_;
  std::vector<Param> params_;
};

/// Tape leaves bound to a ModelParams, indexed by ParamIndex.
struct ParamNodes {
  std::array<NodeId, kParamCount> ids{};
  NodeId operator[](std::size_t i) const { return ids[i]; }
};

ParamNodes bind(Tape& tape, const ModelParams& params);

/// One domain's mini-batch.
struct LabeledBatch {
  std::shared_ptr<const TokenBatch> tokens;
  std::shared_ptr<const Tensor> one_hot;  // [B,2]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

LabeledBatch make_batch(TokenBatch tokens, std::vector<int> labels);

enum class Domain : std::uint8_t { kSource, kTarget };

NodeId encode(Tape& tape, const ParamNodes& p, const LabeledBatch& batch);
/// Domain-specific features v.
NodeId private_features(Tape& tape, const ParamNodes& p, NodeId z, Domain d);
/// Shared features u.
NodeId shared_features(Tape& tape, const ParamNodes& p, NodeId z);
/// Task logits from the concatenation [v, u].
NodeId classify(Tape& tape, const ParamNodes& p, NodeId v, NodeId u, Domain d);
NodeId discriminate(Tape& tape, const ParamNodes& p, NodeId features);

/// Mean cross-entropy; throws if `batch` labels are not one-hot rows.
NodeId task_loss(Tape& tape, NodeId logits, const std::shared_ptr<const Tensor>& one_hot);
/// Full task-loss path for one domain starting at a latent z.
NodeId task_loss_from_latent(Tape& tape, const ParamNodes& p, NodeId z,
                             const LabeledBatch& batch, Domain d);

struct DomainLoss {
  NodeId loss;
  NodeId logits;  // [2B,2]: source rows first
};

/// -log p(0|u_s) - log p(1|u_t), each term averaged over its batch.
/// `lambda` < 0 feeds u straight into the discriminator; otherwise through
/// a gradient reversal layer with that weight.
DomainLoss domain_loss(Tape& tape, const ParamNodes& p, NodeId u_s, NodeId u_t,
                       double lambda = -1.0);

struct ForwardActivations {
  NodeId z_s, z_t;
  NodeId v_s, v_t;
  NodeId u_s, u_t;
  NodeId logits_s, logits_t;
  NodeId logits_d;
  NodeId loss_s, loss_t, loss_d;
};

/// Forward pass of the whole network on a source/target batch pair, with the
/// discriminator behind a reversal layer of weight `lambda`.
ForwardActivations forward(Tape& tape, const ParamNodes& p, const LabeledBatch& source,
                           const LabeledBatch& target, double lambda);

struct JointLoss {
  double value;      // L_s + L_t - L_d
  NodeId objective;  // node whose backward yields the minimax gradients
};

/// L_s + L_t - L_d. The objective node is L_s + L_t + L_d where L_d was
/// computed through the reversal layer, so one backward pass hands theta_d
/// +dL_d and everything upstream of u the reversed -lambda * dL_d.
JointLoss ant_joint_loss(Tape& tape, const ForwardActivations& a);

/// Gradient-reversal weight as a function of training progress p in [0,1]:
/// 2 / (1 + exp(-steepness * p)) - 1.
struct GrlSchedule {
  double steepness = 10.0;
  double operator()(double progress) const;
};

}  // namespace loant
