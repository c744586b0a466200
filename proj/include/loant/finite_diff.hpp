#pragma once

#include <functional>
#include <span>
#include <vector>

#include "loant/tape.hpp"

namespace loant {

/// Builds a scalar loss on `tape` from one leaf per input tensor.
using GraphBuilder = std::function<NodeId(Tape& tape, std::span<const NodeId> inputs)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  std::size_t coords_checked = 0;
};

/// Compares the tape gradient against central differences at every coordinate:
/// max_i |(f(x+eps e_i) - f(x-eps e_i)) / 2eps - g_i| / max(1, |g_i|).
FiniteDiffReport finite_diff_check(const GraphBuilder& f,
                                   const std::vector<Tensor>& point, double eps);

double finite_diff_check(const std::function<NodeId(Tape&, NodeId)>& f,
                         const Tensor& point, double eps);

}  // namespace loant
