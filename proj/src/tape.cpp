#include "loant/tape.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <string>

#include "loant/kernels.hpp"

namespace loant {
namespace {

std::atomic<std::uint64_t> g_next_tape_id{1};

constexpr std::array<std::string_view, kOpKindCount> kOpNames{
    "leaf",    "constant", "add",  "mul",    "scale",          "matmul",
    "concat",  "tanh",     "relu", "softmax", "log",           "negate",
    "sum",     "mean",     "embedding_mean", "softmax_cross_entropy",
    "grad_reverse", "detach",
};

[[noreturn]] void shape_fail(OpKind kind, const std::string& what) {
  throw ShapeError(std::string(op_name(kind)) + ": " + what);
}

void require_rank(OpKind kind, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    shape_fail(kind, "expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
}

std::size_t arity(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return 0;
    case OpKind::kAdd:
    case OpKind::kMul:
    case OpKind::kMatmul:
    case OpKind::kConcat:
      return 2;
    default:
      return 1;
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  kernels::axpy(1.0, src.data(), dst.data());
}

}  // namespace

std::string_view op_name(OpKind kind) {
  const auto i = static_cast<std::size_t>(kind);
  return i < kOpNames.size() ? kOpNames[i] : std::string_view("unknown");
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

const Tape::Node& Tape::node(NodeId id) const {
  if (id.tape != id_ || id.index >= nodes_.size())
    throw Error("node id does not belong to this tape");
  return nodes_[id.index];
}

NodeId Tape::push(OpKind kind, std::vector<NodeId> inputs, OpAttrs attrs,
                  Tensor value) {
  if (!value.all_finite())
    throw NonFiniteError(std::string(op_name(kind)) +
                         " produced a non-finite value");
  nodes_.push_back(Node{kind, std::move(inputs), std::move(attrs), std::move(value)});
  return NodeId{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::leaf(Tensor value) {
  return push(OpKind::kLeaf, {}, {}, std::move(value));
}

namespace {

OpAttrs with_scalar(double v) { OpAttrs a; a.scalar = v; return a; }
OpAttrs with_axis(int v) { OpAttrs a; a.axis = v; return a; }
OpAttrs with_tokens(std::shared_ptr<const TokenBatch> v) { OpAttrs a; a.tokens = std::move(v); return a; }
OpAttrs with_labels(std::shared_ptr<const Tensor> v) { OpAttrs a; a.labels = std::move(v); return a; }

}  // namespace

NodeId Tape::constant(Tensor value) {
  return push(OpKind::kConstant, {}, {}, std::move(value));
}

NodeId Tape::record(OpKind kind, std::span<const NodeId> inputs,
                    const OpAttrs& attrs) {
  if (static_cast<std::size_t>(kind) >= static_cast<std::size_t>(kOpKindCount))
    throw Error("unknown op-kind " + std::to_string(static_cast<int>(kind)));
  if (kind == OpKind::kLeaf || kind == OpKind::kConstant)
    throw Error("leaves are created with leaf()/constant()");
  if (inputs.size() != arity(kind))
    shape_fail(kind, "expected " + std::to_string(arity(kind)) + " inputs");
  for (NodeId in : inputs) node(in);

  const Tensor& x = nodes_[inputs[0].index].value;
  std::vector<NodeId> ins(inputs.begin(), inputs.end());

  switch (kind) {
    case OpKind::kAdd: {
      const Tensor& y = nodes_[inputs[1].index].value;
      Tensor out(x.shape());
      if (x.same_shape(y)) {
        kernels::add(x.data(), y.data(), out.data());
      } else if (x.rank() == 2 && y.rank() == 1 && y.size() == x.cols()) {
        const std::size_t n = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r)
          kernels::add(x.data().subspan(r * n, n), y.data(),
                       out.data().subspan(r * n, n));
      } else {
        shape_fail(kind, shape_string(x.shape()) + " + " + shape_string(y.shape()));
      }
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kMul: {
      const Tensor& y = nodes_[inputs[1].index].value;
      if (!x.same_shape(y))
        shape_fail(kind, shape_string(x.shape()) + " * " + shape_string(y.shape()));
      Tensor out(x.shape());
      kernels::mul(x.data(), y.data(), out.data());
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kScale: {
      Tensor out(x.shape());
      kernels::scale(attrs.scalar, x.data(), out.data());
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kMatmul: {
      const Tensor& y = nodes_[inputs[1].index].value;
      require_rank(kind, x, 2);
      require_rank(kind, y, 2);
      if (x.shape()[1] != y.shape()[0])
        shape_fail(kind, shape_string(x.shape()) + " x " + shape_string(y.shape()));
      const std::size_t m = x.shape()[0], k = x.shape()[1], n = y.shape()[1];
      Tensor out({m, n});
      kernels::active().gemm_nn(m, k, n, x.data().data(), y.data().data(),
                                out.data().data());
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kConcat: {
      const Tensor& y = nodes_[inputs[1].index].value;
      require_rank(kind, x, 2);
      require_rank(kind, y, 2);
      if (attrs.axis == 0) {
        if (x.cols() != y.cols())
          shape_fail(kind, "column mismatch " + shape_string(x.shape()) + " / " +
                               shape_string(y.shape()));
        std::vector<double> data(x.values());
        data.insert(data.end(), y.values().begin(), y.values().end());
        return push(kind, std::move(ins), attrs,
                    Tensor({x.rows() + y.rows(), x.cols()}, std::move(data)));
      }
      if (attrs.axis != 1) shape_fail(kind, "axis must be 0 or 1");
      if (x.rows() != y.rows())
        shape_fail(kind, "row mismatch " + shape_string(x.shape()) + " / " +
                             shape_string(y.shape()));
      const std::size_t cx = x.cols(), cy = y.cols();
      Tensor out({x.rows(), cx + cy});
      for (std::size_t r = 0; r < x.rows(); ++r) {
        std::copy_n(x.data().begin() + r * cx, cx, out.data().begin() + r * (cx + cy));
        std::copy_n(y.data().begin() + r * cy, cy,
                    out.data().begin() + r * (cx + cy) + cx);
      }
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kTanh:
    case OpKind::kRelu:
    case OpKind::kLog:
    case OpKind::kNegate: {
      Tensor out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        switch (kind) {
          case OpKind::kTanh: out[i] = std::tanh(v); break;
          case OpKind::kRelu: out[i] = v > 0.0 ? v : 0.0; break;
          case OpKind::kLog: out[i] = std::log(v); break;
          default: out[i] = -v; break;
        }
      }
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kSoftmax: {
      if (x.rank() == 0) shape_fail(kind, "scalar input");
      Tensor out(x.shape());
      const std::size_t n = x.cols();
      for (std::size_t r = 0; r < x.size() / n; ++r) {
        const auto row = x.data().subspan(r * n, n);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += out[r * n + j] = std::exp(row[j] - mx);
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= z;
      }
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      double s = 0.0;
      for (double v : x.data()) s += v;
      if (kind == OpKind::kMean) {
        if (x.size() == 0) shape_fail(kind, "empty input");
        s /= static_cast<double>(x.size());
      }
      return push(kind, std::move(ins), attrs, Tensor::scalar(s));
    }
    case OpKind::kEmbeddingMean: {
      require_rank(kind, x, 2);
      if (!attrs.tokens || attrs.tokens->empty()) shape_fail(kind, "empty batch");
      const std::size_t vocab = x.rows(), width = x.cols();
      const TokenBatch& batch = *attrs.tokens;
      Tensor out({batch.size(), width});
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].empty()) shape_fail(kind, "empty sequence in batch");
        auto dst = out.data().subspan(b * width, width);
        for (std::uint32_t tok : batch[b]) {
          if (tok >= vocab)
            throw Error("embedding_mean: token id " + std::to_string(tok) +
                        " out of vocabulary of size " + std::to_string(vocab));
          kernels::axpy(1.0, x.data().subspan(tok * width, width), dst);
        }
        kernels::scale(1.0 / static_cast<double>(batch[b].size()), dst, dst);
      }
      return push(kind, std::move(ins), attrs, std::move(out));
    }
    case OpKind::kSoftmaxCrossEntropy: {
      require_rank(kind, x, 2);
      if (!attrs.labels || !attrs.labels->same_shape(x))
        shape_fail(kind, "labels must match logits shape " + shape_string(x.shape()));
      const Tensor& y = *attrs.labels;
      const std::size_t n = x.cols();
      double total = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.data().subspan(r * n, n);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) total += y[r * n + j] * (lse - row[j]);
      }
      return push(kind, std::move(ins), attrs,
                  Tensor::scalar(total / static_cast<double>(x.rows())));
    }
    case OpKind::kGradReverse:
      if (attrs.scalar < 0.0) throw Error("grad_reverse: lambda must be >= 0");
      return push(kind, std::move(ins), attrs, x);
    case OpKind::kDetach:
      return push(kind, std::move(ins), attrs, x);
    default:
      break;
  }
  throw Error("unknown op-kind " + std::to_string(static_cast<int>(kind)));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const NodeId in[] = {a, b};
  return record(OpKind::kAdd, in);
}

NodeId Tape::sub(NodeId a, NodeId b) { return add(a, negate(b)); }

NodeId Tape::mul(NodeId a, NodeId b) {
  const NodeId in[] = {a, b};
  return record(OpKind::kMul, in);
}

NodeId Tape::scale(NodeId x, double factor) {
  const NodeId in[] = {x};
  return record(OpKind::kScale, in, with_scalar(factor));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const NodeId in[] = {a, b};
  return record(OpKind::kMatmul, in);
}

NodeId Tape::concat(NodeId a, NodeId b, int axis) {
  const NodeId in[] = {a, b};
  return record(OpKind::kConcat, in, with_axis(axis));
}

#define LOANT_UNARY(method, kind)            \
  NodeId Tape::method(NodeId x) {            \
    const NodeId in[] = {x};                 \
    return record(OpKind::kind, in);         \
  }
LOANT_UNARY(tanh, kTanh)
LOANT_UNARY(relu, kRelu)
LOANT_UNARY(softmax, kSoftmax)
LOANT_UNARY(log, kLog)
LOANT_UNARY(negate, kNegate)
LOANT_UNARY(sum, kSum)
LOANT_UNARY(mean, kMean)
LOANT_UNARY(detach, kDetach)
#undef LOANT_UNARY

NodeId Tape::embedding_mean(NodeId table, std::shared_ptr<const TokenBatch> tokens) {
  const NodeId in[] = {table};
  return record(OpKind::kEmbeddingMean, in, with_tokens(std::move(tokens)));
}

NodeId Tape::softmax_cross_entropy(NodeId logits,
                                   std::shared_ptr<const Tensor> one_hot) {
  const NodeId in[] = {logits};
  return record(OpKind::kSoftmaxCrossEntropy, in,
                with_labels(std::move(one_hot)));
}

NodeId Tape::grad_reverse(NodeId x, double lambda) {
  const NodeId in[] = {x};
  return record(OpKind::kGradReverse, in, with_scalar(lambda));
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }
OpKind Tape::kind(NodeId id) const { return node(id).kind; }
std::span<const NodeId> Tape::inputs(NodeId id) const { return node(id).inputs; }

Gradients Tape::backward(NodeId loss) const { return run_backward(loss, nullptr); }

Gradients Tape::backward(NodeId loss, std::span<const NodeId> wrt) const {
  std::vector<bool> active(nodes_.size(), false);
  for (NodeId w : wrt) {
    node(w);
    active[w.index] = true;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (active[i]) continue;
    for (NodeId in : nodes_[i].inputs)
      if (active[in.index]) {
        active[i] = true;
        break;
      }
  }
  return run_backward(loss, &active);
}

Gradients Tape::run_backward(NodeId loss, const std::vector<bool>* active) const {
  const Node& root = node(loss);
  if (root.value.size() != 1 || root.value.rank() > 1)
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_string(root.value.shape()));

  Gradients out;
  out.tape_ = id_;
  out.grads_.resize(loss.index + 1);
  out.shapes_.reserve(loss.index + 1);
  for (std::size_t i = 0; i <= loss.index; ++i) out.shapes_.push_back(nodes_[i].value.shape());
  out.grads_[loss.index] = Tensor(root.value.shape(), 1.0);

  auto& grads = out.grads_;
  auto slot = [&](NodeId in) -> Tensor* {
    if (active && !(*active)[in.index]) return nullptr;
    Tensor& g = grads[in.index];
    if (g.size() == 0 && nodes_[in.index].value.size() != 0)
      g = Tensor(nodes_[in.index].value.shape());
    return &g;
  };

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const Tensor& g = grads[i];
    if (g.size() == 0) continue;
    const Node& n = nodes_[i];
    if (n.inputs.empty() || n.kind == OpKind::kDetach) continue;
    const Tensor& x = nodes_[n.inputs[0].index].value;

    switch (n.kind) {
      case OpKind::kAdd: {
        if (Tensor* ga = slot(n.inputs[0])) accumulate(*ga, g);
        if (Tensor* gb = slot(n.inputs[1])) {
          if (gb->same_shape(g)) {
            accumulate(*gb, g);
          } else {
            const std::size_t c = gb->size();
            for (std::size_t r = 0; r < g.size() / c; ++r)
              kernels::axpy(1.0, g.data().subspan(r * c, c), gb->data());
          }
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& y = nodes_[n.inputs[1].index].value;
        Tensor tmp(g.shape());
        if (Tensor* ga = slot(n.inputs[0])) {
          kernels::mul(g.data(), y.data(), tmp.data());
          accumulate(*ga, tmp);
        }
        if (Tensor* gb = slot(n.inputs[1])) {
          kernels::mul(g.data(), x.data(), tmp.data());
          accumulate(*gb, tmp);
        }
        break;
      }
      case OpKind::kScale:
        if (Tensor* ga = slot(n.inputs[0])) kernels::axpy(n.attrs.scalar, g.data(), ga->data());
        break;
      case OpKind::kGradReverse:
        if (Tensor* ga = slot(n.inputs[0])) kernels::axpy(-n.attrs.scalar, g.data(), ga->data());
        break;
      case OpKind::kNegate:
        if (Tensor* ga = slot(n.inputs[0])) kernels::axpy(-1.0, g.data(), ga->data());
        break;
      case OpKind::kMatmul: {
        const Tensor& y = nodes_[n.inputs[1].index].value;
        const std::size_t m = x.shape()[0], k = x.shape()[1], c = y.shape()[1];
        if (Tensor* ga = slot(n.inputs[0]))
          kernels::active().gemm_nt(m, c, k, g.data().data(), y.data().data(),
                                    ga->data().data());
        if (Tensor* gb = slot(n.inputs[1]))
          kernels::active().gemm_tn(k, m, c, x.data().data(), g.data().data(),
                                    gb->data().data());
        break;
      }
      case OpKind::kConcat: {
        const Tensor& y = nodes_[n.inputs[1].index].value;
        Tensor* ga = slot(n.inputs[0]);
        Tensor* gb = slot(n.inputs[1]);
        if (n.attrs.axis == 0) {
          if (ga) kernels::axpy(1.0, g.data().subspan(0, x.size()), ga->data());
          if (gb) kernels::axpy(1.0, g.data().subspan(x.size(), y.size()), gb->data());
        } else {
          const std::size_t cx = x.cols(), cy = y.cols();
          for (std::size_t r = 0; r < x.rows(); ++r) {
            const auto row = g.data().subspan(r * (cx + cy), cx + cy);
            if (ga) kernels::axpy(1.0, row.subspan(0, cx), ga->data().subspan(r * cx, cx));
            if (gb) kernels::axpy(1.0, row.subspan(cx, cy), gb->data().subspan(r * cy, cy));
          }
        }
        break;
      }
      case OpKind::kTanh:
      case OpKind::kRelu:
      case OpKind::kLog: {
        Tensor* ga = slot(n.inputs[0]);
        if (!ga) break;
        for (std::size_t j = 0; j < g.size(); ++j) {
          double d;
          if (n.kind == OpKind::kTanh) d = 1.0 - n.value[j] * n.value[j];
          else if (n.kind == OpKind::kRelu) d = x[j] > 0.0 ? 1.0 : 0.0;
          else d = 1.0 / x[j];
          (*ga)[j] += g[j] * d;
        }
        break;
      }
      case OpKind::kSoftmax: {
        Tensor* ga = slot(n.inputs[0]);
        if (!ga) break;
        const std::size_t c = x.cols();
        for (std::size_t r = 0; r < x.size() / c; ++r) {
          const auto yr = n.value.data().subspan(r * c, c);
          const auto gr = g.data().subspan(r * c, c);
          const double s = kernels::dot(gr, yr);
          for (std::size_t j = 0; j < c; ++j) (*ga)[r * c + j] += yr[j] * (gr[j] - s);
        }
        break;
      }
      case OpKind::kSum:
      case OpKind::kMean: {
        Tensor* ga = slot(n.inputs[0]);
        if (!ga) break;
        double seed = g[0];
        if (n.kind == OpKind::kMean) seed /= static_cast<double>(x.size());
        for (double& v : ga->data()) v += seed;
        break;
      }
      case OpKind::kEmbeddingMean: {
        Tensor* ga = slot(n.inputs[0]);
        if (!ga) break;
        const std::size_t width = x.cols();
        const TokenBatch& batch = *n.attrs.tokens;
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const double w = 1.0 / static_cast<double>(batch[b].size());
          const auto gb = g.data().subspan(b * width, width);
          for (std::uint32_t tok : batch[b])
            kernels::axpy(w, gb, ga->data().subspan(tok * width, width));
        }
        break;
      }
      case OpKind::kSoftmaxCrossEntropy: {
        Tensor* ga = slot(n.inputs[0]);
        if (!ga) break;
        const Tensor& y = *n.attrs.labels;
        const std::size_t c = x.cols();
        const double seed = g[0] / static_cast<double>(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const auto row = x.data().subspan(r * c, c);
          const double mx = *std::max_element(row.begin(), row.end());
          double z = 0.0;
          for (double v : row) z += std::exp(v - mx);
          double ysum = 0.0;
          for (std::size_t j = 0; j < c; ++j) ysum += y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(row[j] - mx) / z;
            (*ga)[r * c + j] += seed * (ysum * p - y[r * c + j]);
          }
        }
        break;
      }
      default:
        break;
    }
  }
  return out;
}

bool Gradients::has(NodeId id) const {
  return id.tape == tape_ && id.index < grads_.size() && grads_[id.index].size() != 0;
}

const Tensor* Gradients::find(NodeId id) const {
  return has(id) ? &grads_[id.index] : nullptr;
}

Tensor Gradients::operator[](NodeId id) const {
  if (id.tape != tape_) throw Error("gradient lookup with a node from another tape");
  if (const Tensor* g = find(id)) return *g;
  if (id.index < shapes_.size()) return Tensor(shapes_[id.index]);
  throw Error("gradient lookup for a node recorded after the loss");
}

}  // namespace loant
