#pragma once

// Two-dimensional quadratic f(w) = w^T A w + b^T w + c and three
// minimizers: plain gradient descent, first-order extragradient (gradient at
// the look-ahead point) and extragradient with the exact total derivative
// through the look-ahead, which for a quadratic has an analytic Hessian.

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace loant::quad {

using Vec2 = std::array<double, 2>;
/// Row-major 2x2.
using Mat2 = std::array<double, 4>;

struct Eigen2 {
  Vec2 values;                  // ascending
  std::array<Vec2, 2> vectors;  // unit eigenvectors matching `values`
};

Eigen2 symmetric_eigen(const Mat2& m);

class Quadratic {
 public:
  /// Validates symmetry (1e-12) and positive definiteness.
  Quadratic(const Mat2& a, const Vec2& b, double c);

  /// A = R^T diag(38, 0.95) R with R a 30 degree rotation, b placing the
  /// minimizer at (0.4, 0), c = 0. The Hessian 2A has condition number 40.
  static Quadratic reconstructed_default();

  double value(const Vec2& w) const;
  Vec2 gradient(const Vec2& w) const;
  Mat2 hessian() const;
  Vec2 minimizer() const;
  const Eigen2& eigen() const { return eigen_; }
  double condition_number() const { return eigen_.values[1] / eigen_.values[0]; }

  const Mat2& a() const { return a_; }
  const Vec2& b() const { return b_; }
  double c() const { return c_; }

 private:
  Mat2 a_;
  Vec2 b_;
  double c_;
  Eigen2 eigen_;
};

enum class Method { kGd, kEgFirstOrder, kEgFullHessian };
std::string_view method_name(Method m);
Method parse_method(std::string_view name);

/// w - eta grad f(w)
Vec2 gd_step(const Quadratic& q, const Vec2& w, double eta);
/// w - eta grad f(w - gamma grad f(w))
Vec2 eg_first_order_step(const Quadratic& q, const Vec2& w, double eta, double gamma);
/// w - eta (I - gamma H) grad f(w - gamma grad f(w))
Vec2 eg_full_hessian_step(const Quadratic& q, const Vec2& w, double eta, double gamma);

struct Trajectory {
  Method method = Method::kGd;
  double eta = 0.0;
  double gamma = 0.0;
  std::vector<Vec2> points;
  std::vector<double> values;
  std::vector<double> grad_norms;
  bool diverged = false;  // stopped early on a non-finite iterate

  std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
  /// First step index with ||grad f|| < tol, or npos.
  std::size_t steps_to_converge(double tol = 1e-3) const;
};

Trajectory run(const Quadratic& q, Method method, const Vec2& start, double eta, double gamma,
               std::size_t steps);
Trajectory gd_trajectory(const Quadratic& q, const Vec2& start, double eta, std::size_t steps);
Trajectory eg_first_order_trajectory(const Quadratic& q, const Vec2& start, double eta,
                                     double gamma, std::size_t steps);
Trajectory eg_full_hessian_trajectory(const Quadratic& q, const Vec2& start, double eta,
                                      double gamma, std::size_t steps);

struct ContourGrid {
  std::size_t nx = 120;
  std::size_t ny = 120;
  std::size_t levels = 14;
  double width = 640.0;
  double height = 480.0;
  /// Explicit plot box {xmin, xmax, ymin, ymax}; derived from the data when unset.
  std::array<double, 4> box{0.0, 0.0, 0.0, 0.0};
};

std::string render_svg(const Quadratic& q, const std::vector<Trajectory>& trajectories,
                       const ContourGrid& grid = {});
/// Columns method,step,w1,w2,f,gradnorm; one row per recorded point.
std::string render_csv(const std::vector<Trajectory>& trajectories);

}  // namespace loant::quad
