#include "loant/finite_diff.hpp"

#include <algorithm>
#include <cmath>

namespace loant {
namespace {

double evaluate(const GraphBuilder& f, const std::vector<Tensor>& point) {
  Tape tape;
  std::vector<NodeId> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(tape.leaf(t));
  const double v = tape.value(f(tape, leaves)).item();
  if (!std::isfinite(v)) throw NonFiniteError("finite_diff_check: f is not finite");
  return v;
}

}  // namespace

FiniteDiffReport finite_diff_check(const GraphBuilder& f,
                                   const std::vector<Tensor>& point, double eps) {
  if (!(eps > 0.0)) throw Error("finite_diff_check: step must be positive");

  Tape tape;
  std::vector<NodeId> leaves;
  for (const Tensor& t : point) leaves.push_back(tape.leaf(t));
  const NodeId loss = f(tape, leaves);
  if (!std::isfinite(tape.value(loss).item()))
    throw NonFiniteError("finite_diff_check: f is not finite");
  const Gradients grads = tape.backward(loss);

  FiniteDiffReport report;
  std::vector<Tensor> probe = point;
  for (std::size_t t = 0; t < point.size(); ++t) {
    const Tensor g = grads[leaves[t]];
    for (std::size_t i = 0; i < point[t].size(); ++i) {
      const double x0 = point[t][i];
      probe[t][i] = x0 + eps;
      const double up = evaluate(f, probe);
      probe[t][i] = x0 - eps;
      const double down = evaluate(f, probe);
      probe[t][i] = x0;
      const double fd = (up - down) / (2.0 * eps);
      const double err = std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i]));
      if (err > report.max_rel_error || report.coords_checked == 0) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_input = t;
        report.worst_coord = i;
      }
      ++report.coords_checked;
    }
  }
  return report;
}

double finite_diff_check(const std::function<NodeId(Tape&, NodeId)>& f,
                         const Tensor& point, double eps) {
  const GraphBuilder wrapped = [&](Tape& tape, std::span<const NodeId> in) {
    return f(tape, in[0]);
  };
  return finite_diff_check(wrapped, std::vector<Tensor>{point}, eps).max_rel_error;
}

}  // namespace loant
