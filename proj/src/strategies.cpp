#include "loant/strategies.hpp"

#include <array>

#include "loant/kernels.hpp"

namespace loant {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kAnt: return "ANT";
    case Strategy::kLoant: return "LOANT";
    case Strategy::kMtl: return "MTL";
    case Strategy::kMtlLo: return "MTL+LO";
    case Strategy::kAntMaml: return "ANT+MAML";
    case Strategy::kSeqFinetune: return "SEQ-FINETUNE";
    case Strategy::kSourceOnly: return "SOURCE-ONLY";
    case Strategy::kTargetOnly: return "TARGET-ONLY";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kAnt, Strategy::kLoant, Strategy::kMtl, Strategy::kMtlLo,
                     Strategy::kAntMaml, Strategy::kSeqFinetune, Strategy::kSourceOnly,
                     Strategy::kTargetOnly})
    if (strategy_name(s) == name) return s;
  throw Error("unknown strategy '" + std::string(name) + "'");
}

bool is_adversarial(Strategy s) {
  return s == Strategy::kAnt || s == Strategy::kLoant || s == Strategy::kAntMaml;
}

Tensor look_ahead(const Tensor& z, const Tensor& grad, double step) {
  if (!z.same_shape(grad))
    throw ShapeError("look_ahead: latent " + shape_string(z.shape()) + " vs gradient " +
                     shape_string(grad.shape()));
  Tensor out = z;
  kernels::axpy(step, grad.data(), out.data());
  return out;
}

namespace {

NodeId shifted(Tape& tape, NodeId z, const Tensor& grad, double step) {
  Tensor delta(grad.shape());
  kernels::scale(step, grad.data(), delta.data());
  // The displacement is a constant: no second-order term flows back.
  return tape.add(z, tape.constant(std::move(delta)));
}

}  // namespace

LatentPair latent_step(Tape& tape, NodeId z_s, NodeId z_t, NodeId loss_d, double gamma) {
  if (gamma < 0.0) throw Error("latent_step: gamma must be >= 0");
  const NodeId wrt[] = {z_s, z_t};
  const Gradients g = tape.backward(loss_d, wrt);
  return LatentPair{z_s, z_t, shifted(tape, z_s, g[z_s], gamma),
                    shifted(tape, z_t, g[z_t], gamma), gamma};
}

LatentPair mtl_lo_step(Tape& tape, NodeId z_s, NodeId z_t, NodeId loss_s, NodeId loss_t,
                       double gamma) {
  if (gamma < 0.0) throw Error("mtl_lo_step: gamma must be >= 0");
  const NodeId ws[] = {z_s};
  const NodeId wt[] = {z_t};
  const Tensor gs = tape.backward(loss_s, ws)[z_s];
  const Tensor gt = tape.backward(loss_t, wt)[z_t];
  return LatentPair{z_s, z_t, shifted(tape, z_s, gs, -gamma), shifted(tape, z_t, gt, -gamma),
                    gamma};
}

namespace {

ParamGrads collect(const Gradients& g, const ParamNodes& p) {
  ParamGrads out;
  out.reserve(kParamCount);
  for (std::size_t i = 0; i < kParamCount; ++i) out.push_back(g[p[i]]);
  return out;
}

// One tape, one objective. The discriminator branch is built before the
// task branch and reads its own copy of the shared features, so a look-ahead
// of zero leaves the graph (and the gradient summation order) unchanged.
StepResult single_pass(Strategy strategy, const ModelParams& params, const LabeledBatch& source,
                       const LabeledBatch& target, double gamma, double lambda) {
  Tape tape;
  const ParamNodes p = bind(tape, params);
  const bool use_source = strategy != Strategy::kTargetOnly;
  const bool use_target = strategy != Strategy::kSourceOnly;
  const bool adversarial = is_adversarial(strategy);

  const NodeId z_s = use_source ? encode(tape, p, source) : NodeId{};
  const NodeId z_t = use_target ? encode(tape, p, target) : NodeId{};

  StepResult result;
  NodeId loss_d_grl{};
  NodeId z_s_task = z_s, z_t_task = z_t;

  if (adversarial) {
    const NodeId u_s = shared_features(tape, p, z_s);
    const NodeId u_t = shared_features(tape, p, z_t);
    if (strategy == Strategy::kLoant) {
      const NodeId loss_d = domain_loss(tape, p, u_s, u_t).loss;
      loss_d_grl = domain_loss(tape, p, u_s, u_t, lambda).loss;
      const LatentPair lp = latent_step(tape, z_s, z_t, loss_d, gamma);
      z_s_task = lp.z_s_next;
      z_t_task = lp.z_t_next;
      result.aux_state = tape.value(lp.z_s_next).size() + tape.value(lp.z_t_next).size();
    } else {
      loss_d_grl = domain_loss(tape, p, u_s, u_t, lambda).loss;
    }
    result.losses.domain = tape.value(loss_d_grl).item();
  } else if (strategy == Strategy::kMtlLo) {
    const NodeId ls = task_loss_from_latent(tape, p, z_s, source, Domain::kSource);
    const NodeId lt = task_loss_from_latent(tape, p, z_t, target, Domain::kTarget);
    const LatentPair lp = mtl_lo_step(tape, z_s, z_t, ls, lt, gamma);
    z_s_task = lp.z_s_next;
    z_t_task = lp.z_t_next;
    result.aux_state = tape.value(lp.z_s_next).size() + tape.value(lp.z_t_next).size();
  }

  NodeId objective{};
  bool have = false;
  auto accumulate = [&](NodeId term) {
    objective = have ? tape.add(objective, term) : term;
    have = true;
  };
  if (use_source) {
    const NodeId ls = task_loss_from_latent(tape, p, z_s_task, source, Domain::kSource);
    result.losses.source = tape.value(ls).item();
    accumulate(ls);
  }
  if (use_target) {
    const NodeId lt = task_loss_from_latent(tape, p, z_t_task, target, Domain::kTarget);
    result.losses.target = tape.value(lt).item();
    accumulate(lt);
  }
  if (adversarial) accumulate(loss_d_grl);

  result.losses.joint = result.losses.source + result.losses.target - result.losses.domain;
  result.grads = collect(tape.backward(objective), p);
  return result;
}

}  // namespace

ModelParams maml_lookahead_step(const ModelParams& params, const LabeledBatch& source,
                                const LabeledBatch& target, double gamma) {
  if (gamma < 0.0) throw Error("maml_lookahead_step: gamma must be >= 0");
  Tape tape;
  const ParamNodes p = bind(tape, params);
  const NodeId z_s = encode(tape, p, source);
  const NodeId z_t = encode(tape, p, target);
  const NodeId loss_d =
      domain_loss(tape, p, shared_features(tape, p, z_s), shared_features(tape, p, z_t)).loss;
  std::vector<NodeId> encoder;
  for (std::size_t i = 0; i < kParamCount; ++i)
    if (params[i].group == ParamGroup::kEncoder) encoder.push_back(p[i]);
  const Gradients g = tape.backward(loss_d, encoder);

  ModelParams out = params;
  for (std::size_t i = 0; i < kParamCount; ++i)
    if (params[i].group == ParamGroup::kEncoder)
      out[i].value = look_ahead(params[i].value, g[p[i]], gamma);
  return out;
}

StepResult step_gradients(Strategy strategy, const ModelParams& params,
                          const LabeledBatch& source, const LabeledBatch& target, double gamma,
                          double lambda) {
  switch (strategy) {
    case Strategy::kAntMaml: {
      const ModelParams shifted_params = maml_lookahead_step(params, source, target, gamma);
      StepResult r = single_pass(Strategy::kAnt, shifted_params, source, target, 0.0, lambda);
      r.aux_state = params.group_scalars(ParamGroup::kEncoder);
      return r;
    }
    case Strategy::kSeqFinetune:
      throw Error("SEQ-FINETUNE is a two-phase schedule; use sequential_finetune()");
    default:
      return single_pass(strategy, params, source, target, gamma, lambda);
  }
}

double lo_joint_loss(const ModelParams& params, const LabeledBatch& source,
                     const LabeledBatch& target, double gamma, double lambda) {
  return step_gradients(Strategy::kLoant, params, source, target, gamma, lambda).losses.joint;
}

ParamGrads loant_grads(const ModelParams& params, const LabeledBatch& source,
                       const LabeledBatch& target, double gamma, double lambda) {
  return step_gradients(Strategy::kLoant, params, source, target, gamma, lambda).grads;
}

Tensor maml_meta_update(const Tensor& w, std::span<const TaskLoss> tasks, double gamma,
                        double eta) {
  if (tasks.empty()) throw Error("maml_meta_update: need at least one task");
  if (gamma < 0.0) throw Error("maml_meta_update: gamma must be >= 0");
  Tensor total(w.shape());
  for (const TaskLoss& task : tasks) {
    Tape inner;
    const NodeId leaf = inner.leaf(w);
    const Tensor g = inner.backward(task(inner, leaf))[leaf];
    const Tensor adapted = look_ahead(w, g, -gamma);

    Tape outer;
    const NodeId at = outer.leaf(adapted);
    kernels::axpy(1.0, outer.backward(task(outer, at))[at].data(), total.data());
  }
  return look_ahead(w, total, -eta / static_cast<double>(tasks.size()));
}

std::array<double, kParamGroupCount> group_sq_norms(const ModelParams& params,
                                                    const ParamGrads& grads) {
  std::array<double, kParamGroupCount> out{};
  for (std::size_t i = 0; i < params.size(); ++i)
    out[static_cast<std::size_t>(params[i].group)] += kernels::dot(grads[i].data(), grads[i].data());
  return out;
}

}  // namespace loant
