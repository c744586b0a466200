#pragma once

// Reverse-mode automatic differentiation on an append-only tape.
//
// Every recorded node keeps its forward value. backward() returns the
// gradient of a scalar node with respect to *every* node on the tape,
// intermediates included, so callers can read d(loss)/d(activation) as
// easily as d(loss)/d(weight). Only first-order gradients are supported.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "loant/tensor.hpp"

namespace loant {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,       // same shape, or [m,n] + [n] row broadcast
  kMul,       // elementwise, same shape
  kScale,     // x * scalar
  kMatmul,    // [m,k] x [k,n]
  kConcat,    // along axis 0 or 1 of two rank-2 tensors
  kTanh,
  kRelu,
  kSoftmax,   // row-wise over the last axis
  kLog,
  kNegate,
  kSum,       // reduce to scalar
  kMean,      // reduce to scalar
  kEmbeddingMean,
  kSoftmaxCrossEntropy,
  kGradReverse,
  kDetach,
};

inline constexpr int kOpKindCount = static_cast<int>(OpKind::kDetach) + 1;

std::string_view op_name(OpKind kind);

struct NodeId {
  std::uint64_t tape = 0;
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

/// Token-id sequences for one batch; each row is pooled independently.
using TokenBatch = std::vector<std::vector<std::uint32_t>>;

/// Operation attributes. Only the fields relevant to the op-kind are read.
struct OpAttrs {
  double scalar = 0.0;  // kScale factor, kGradReverse lambda
  int axis = 0;         // kConcat
  std::shared_ptr<const TokenBatch> tokens;  // kEmbeddingMean
  std::shared_ptr<const Tensor> labels;      // kSoftmaxCrossEntropy (one-hot)
};

class Gradients;

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  NodeId leaf(Tensor value);
  NodeId constant(Tensor value);

  /// Generic entry point; validates arity and shapes, then evaluates.
  NodeId record(OpKind kind, std::span<const NodeId> inputs,
                const OpAttrs& attrs = {});

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor);
  NodeId matmul(NodeId a, NodeId b);
  NodeId concat(NodeId a, NodeId b, int axis);
  NodeId tanh(NodeId x);
  NodeId relu(NodeId x);
  NodeId softmax(NodeId x);
  NodeId log(NodeId x);
  NodeId negate(NodeId x);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId embedding_mean(NodeId table, std::shared_ptr<const TokenBatch> tokens);
  /// Mean over rows of -sum_j y_j log softmax(logits)_j.
  NodeId softmax_cross_entropy(NodeId logits, std::shared_ptr<const Tensor> one_hot);
  /// Identity forward; multiplies the incoming gradient by -lambda.
  NodeId grad_reverse(NodeId x, double lambda);
  /// Same value as x, but no gradient flows back into x's ancestors.
  NodeId detach(NodeId x);

  const Tensor& value(NodeId id) const;
  OpKind kind(NodeId id) const;
  std::span<const NodeId> inputs(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

  /// Gradient of the scalar `loss` with respect to every node.
  Gradients backward(NodeId loss) const;
  /// As backward(loss), restricted to paths that start at one of `wrt`.
  /// Nodes not downstream of `wrt` receive no gradient.
  Gradients backward(NodeId loss, std::span<const NodeId> wrt) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
  };

  const Node& node(NodeId id) const;
  NodeId push(OpKind kind, std::vector<NodeId> inputs, OpAttrs attrs, Tensor value);
  Gradients run_backward(NodeId loss, const std::vector<bool>* active) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
};

/// Result of a backward pass. Nodes the loss does not depend on report zeros.
class Gradients {
 public:
  Gradients() = default;

  bool has(NodeId id) const;
  /// Gradient for `id`; a zero tensor of the node's shape if none reached it.
  Tensor operator[](NodeId id) const;
  const Tensor* find(NodeId id) const;

 private:
  friend class Tape;
  std::uint64_t tape_ = 0;
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

}  // namespace loant
