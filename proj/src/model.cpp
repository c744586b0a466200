#include "loant/model.hpp"

#include <cmath>

#include "loant/rng.hpp"

namespace loant {
namespace {

struct ParamSpec {
  const char* name;
  ParamGroup group;
  enum Kind { kEmbed, kWeight, kBias } kind;
};

constexpr std::array<ParamSpec, kParamCount> kSpecs{{
    {"encoder.embedding", ParamGroup::kEncoder, ParamSpec::kEmbed},
    {"encoder.dense1.w", ParamGroup::kEncoder, ParamSpec::kWeight},
    {"encoder.dense1.b", ParamGroup::kEncoder, ParamSpec::kBias},
    {"encoder.dense2.w", ParamGroup::kEncoder, ParamSpec::kWeight},
    {"encoder.dense2.b", ParamGroup::kEncoder, ParamSpec::kBias},
    {"shared.w", ParamGroup::kShared, ParamSpec::kWeight},
    {"shared.b", ParamGroup::kShared, ParamSpec::kBias},
    {"source.w", ParamGroup::kSource, ParamSpec::kWeight},
    {"source.b", ParamGroup::kSource, ParamSpec::kBias},
    {"source.clf1.w", ParamGroup::kSource, ParamSpec::kWeight},
    {"source.clf1.b", ParamGroup::kSource, ParamSpec::kBias},
    {"source.clf2.w", ParamGroup::kSource, ParamSpec::kWeight},
    {"source.clf2.b", ParamGroup::kSource, ParamSpec::kBias},
    {"target.w", ParamGroup::kTarget, ParamSpec::kWeight},
    {"target.b", ParamGroup::kTarget, ParamSpec::kBias},
    {"target.clf1.w", ParamGroup::kTarget, ParamSpec::kWeight},
    {"target.clf1.b", ParamGroup::kTarget, ParamSpec::kBias},
    {"target.clf2.w", ParamGroup::kTarget, ParamSpec::kWeight},
    {"target.clf2.b", ParamGroup::kTarget, ParamSpec::kBias},
    {"disc.1.w", ParamGroup::kDiscriminator, ParamSpec::kWeight},
    {"disc.1.b", ParamGroup::kDiscriminator, ParamSpec::kBias},
    {"disc.2.w", ParamGroup::kDiscriminator, ParamSpec::kWeight},
    {"disc.2.b", ParamGroup::kDiscriminator, ParamSpec::kBias},
}};

Shape param_shape(std::size_t i, const ModelConfig& c) {
  const std::size_t v = c.vocab_size, e = c.embed_dim, d = c.latent_dim;
  switch (i) {
    case kEmbedding: return {v, e};
    case kEncW1: return {e, d};
    case kSourceClfW1:
    case kTargetClfW1: return {2 * d, d};
    case kSourceClfW2:
    case kTargetClfW2:
    case kDiscW2: return {d, 2};
    case kSourceClfB2:
    case kTargetClfB2:
    case kDiscB2: return {2};
    default:
      return kSpecs[i].kind == ParamSpec::kBias ? Shape{d} : Shape{d, d};
  }
}

Tensor draw(std::size_t i, const ModelConfig& c, std::uint64_t seed) {
  Tensor t(param_shape(i, c));
  const ParamSpec& spec = kSpecs[i];
  if (spec.kind == ParamSpec::kBias) return t;
  Rng rng(seed, spec.name);
  double bound = 1.0;
  if (spec.kind == ParamSpec::kWeight) {
    const double fan_in = static_cast<double>(t.shape()[0]);
    const double fan_out = static_cast<double>(t.shape()[1]);
    bound = std::sqrt(6.0 / (fan_in + fan_out));
  }
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEncoder: return "w_b";
    case ParamGroup::kShared: return "w_sh";
    case ParamGroup::kSource: return "phi_s";
    case ParamGroup::kTarget: return "phi_t";
    case ParamGroup::kDiscriminator: return "theta_d";
  }
  return "?";
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  if (config.vocab_size == 0 || config.embed_dim == 0 || config.latent_dim == 0)
    throw Error("model dimensions must be positive");
  ModelParams p;
  p.config_ = config;
  for (std::size_t i = 0; i < kParamCount; ++i)
    p.params_.push_back(Param{kSpecs[i].name, kSpecs[i].group, Tensor(param_shape(i, config))});
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  for (std::size_t i = 0; i < kParamCount; ++i) p.params_[i].value = draw(i, config, seed);
  return p;
}

void ModelParams::reinit_group(ParamGroup g, std::uint64_t seed) {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].group == g) params_[i].value = draw(i, config_, seed);
}

std::size_t ModelParams::group_scalars(ParamGroup g) const {
  std::size_t n = 0;
  for (const Param& p : params_)
    if (p.group == g) n += p.value.size();
  return n;
}

std::size_t ModelParams::total_scalars() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const Param& p : params_)
    if (!p.value.all_finite()) return false;
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i)
    if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value))
      return false;
  return true;
}

ParamNodes bind(Tape& tape, const ModelParams& params) {
  if (params.size() != kParamCount) throw Error("bind: incomplete parameter set");
  ParamNodes nodes;
  for (std::size_t i = 0; i < kParamCount; ++i) nodes.ids[i] = tape.leaf(params[i].value);
  return nodes;
}

LabeledBatch make_batch(TokenBatch tokens, std::vector<int> labels) {
  if (tokens.size() != labels.size()) throw Error("make_batch: tokens/labels length mismatch");
  if (tokens.empty()) throw Error("make_batch: empty batch");
  Tensor one_hot({labels.size(), 2});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("make_batch: labels must be 0 or 1");
    one_hot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  LabeledBatch b;
  b.tokens = std::make_shared<const TokenBatch>(std::move(tokens));
  b.one_hot = std::make_shared<const Tensor>(std::move(one_hot));
  b.labels = std::move(labels);
  return b;
}

namespace {

NodeId dense(Tape& tape, NodeId x, NodeId w, NodeId b) {
  return tape.add(tape.matmul(x, w), b);
}

}  // namespace

NodeId encode(Tape& tape, const ParamNodes& p, const LabeledBatch& batch) {
  const NodeId pooled = tape.embedding_mean(p[kEmbedding], batch.tokens);
  const NodeId h = tape.tanh(dense(tape, pooled, p[kEncW1], p[kEncB1]));
  return tape.tanh(dense(tape, h, p[kEncW2], p[kEncB2]));
}

NodeId private_features(Tape& tape, const ParamNodes& p, NodeId z, Domain d) {
  return d == Domain::kSource ? tape.tanh(dense(tape, z, p[kSourceW], p[kSourceB]))
                              : tape.tanh(dense(tape, z, p[kTargetW], p[kTargetB]));
}

NodeId shared_features(Tape& tape, const ParamNodes& p, NodeId z) {
  return tape.tanh(dense(tape, z, p[kSharedW], p[kSharedB]));
}

NodeId classify(Tape& tape, const ParamNodes& p, NodeId v, NodeId u, Domain d) {
  const std::size_t base = d == Domain::kSource ? kSourceClfW1 : kTargetClfW1;
  const NodeId h = tape.relu(dense(tape, tape.concat(v, u, 1), p[base], p[base + 1]));
  return dense(tape, h, p[base + 2], p[base + 3]);
}

NodeId discriminate(Tape& tape, const ParamNodes& p, NodeId features) {
  const NodeId h = tape.relu(dense(tape, features, p[kDiscW1], p[kDiscB1]));
  return dense(tape, h, p[kDiscW2], p[kDiscB2]);
}

NodeId task_loss(Tape& tape, NodeId logits, const std::shared_ptr<const Tensor>& one_hot) {
  if (!one_hot || one_hot->rank() != 2 || one_hot->cols() != 2)
    throw Error("task_loss: labels must be one-hot rows of width 2");
  for (std::size_t r = 0; r < one_hot->rows(); ++r) {
    const double a = one_hot->at(r, 0), b = one_hot->at(r, 1);
    const bool ok = (a == 1.0 && b == 0.0) || (a == 0.0 && b == 1.0);
    if (!ok) throw Error("task_loss: malformed one-hot label in row " + std::to_string(r));
  }
  return tape.softmax_cross_entropy(logits, one_hot);
}

NodeId task_loss_from_latent(Tape& tape, const ParamNodes& p, NodeId z,
                             const LabeledBatch& batch, Domain d) {
  const NodeId v = private_features(tape, p, z, d);
  const NodeId u = shared_features(tape, p, z);
  return task_loss(tape, classify(tape, p, v, u, d), batch.one_hot);
}

DomainLoss domain_loss(Tape& tape, const ParamNodes& p, NodeId u_s, NodeId u_t,
                       double lambda) {
  const std::size_t bs = tape.value(u_s).rows(), bt = tape.value(u_t).rows();
  if (bs != bt)
    throw Error("domain_loss: source batch " + std::to_string(bs) +
                " and target batch " + std::to_string(bt) + " differ");
  NodeId both = tape.concat(u_s, u_t, 0);
  if (lambda >= 0.0) both = tape.grad_reverse(both, lambda);
  const NodeId logits = discriminate(tape, p, both);
  Tensor labels({2 * bs, 2});
  for (std::size_t i = 0; i < bs; ++i) {
    labels.at(i, 0) = 1.0;
    labels.at(bs + i, 1) = 1.0;
  }
  const NodeId mean2 =
      tape.softmax_cross_entropy(logits, std::make_shared<const Tensor>(std::move(labels)));
  // Averaging over 2B rows halves the sum of the two per-domain means.
  return DomainLoss{tape.scale(mean2, 2.0), logits};
}

ForwardActivations forward(Tape& tape, const ParamNodes& p, const LabeledBatch& source,
                           const LabeledBatch& target, double lambda) {
  ForwardActivations a{};
  a.z_s = encode(tape, p, source);
  a.z_t = encode(tape, p, target);
  a.v_s = private_features(tape, p, a.z_s, Domain::kSource);
  a.u_s = shared_features(tape, p, a.z_s);
  a.v_t = private_features(tape, p, a.z_t, Domain::kTarget);
  a.u_t = shared_features(tape, p, a.z_t);
  a.logits_s = classify(tape, p, a.v_s, a.u_s, Domain::kSource);
  a.logits_t = classify(tape, p, a.v_t, a.u_t, Domain::kTarget);
  a.loss_s = task_loss(tape, a.logits_s, source.one_hot);
  a.loss_t = task_loss(tape, a.logits_t, target.one_hot);
  const DomainLoss d = domain_loss(tape, p, a.u_s, a.u_t, lambda);
  a.logits_d = d.logits;
  a.loss_d = d.loss;
  return a;
}

JointLoss ant_joint_loss(Tape& tape, const ForwardActivations& a) {
  const double value = tape.value(a.loss_s).item() + tape.value(a.loss_t).item() -
                       tape.value(a.loss_d).item();
  const NodeId objective = tape.add(tape.add(a.loss_s, a.loss_t), a.loss_d);
  return JointLoss{value, objective};
}

double GrlSchedule::operator()(double progress) const {
  if (progress < 0.0 || progress > 1.0) throw Error("GrlSchedule: progress outside [0,1]");
  return 2.0 / (1.0 + std::exp(-steepness * progress)) - 1.0;
}

}  // namespace loant
