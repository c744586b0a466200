#include "loant/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "loant/tensor.hpp"

namespace loant::quad {

Eigen2 symmetric_eigen(const Mat2& m) {
  const double a = m[0], b = m[1], d = m[3];
  const double mean = 0.5 * (a + d);
  const double r = std::hypot(0.5 * (a - d), b);
  Eigen2 e;
  e.values = {mean - r, mean + r};
  for (int i = 0; i < 2; ++i) {
    Vec2 v;
    if (std::abs(b) > 1e-300) {
      v = {e.values[i] - d, b};
    } else {
      // Diagonal: eigenvectors are the axes, ordered to match the values.
      const bool first_axis = (a <= d) == (i == 0);
      v = first_axis ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    }
    const double n = std::hypot(v[0], v[1]);
    e.vectors[i] = {v[0] / n, v[1] / n};
  }
  return e;
}

Quadratic::Quadratic(const Mat2& a, const Vec2& b, double c) : a_(a), b_(b), c_(c) {
  if (std::abs(a[1] - a[2]) > 1e-12) throw Error("quadratic: A must be symmetric");
  a_[2] = a_[1];
  eigen_ = symmetric_eigen(a_);
  if (!(eigen_.values[0] > 0.0)) throw Error("quadratic: A must be positive definite");
}

Quadratic Quadratic::reconstructed_default() {
  const double t = std::numbers::pi / 6.0;
  const double co = std::cos(t), si = std::sin(t);
  const Mat2 r{co, -si, si, co};
  const double d0 = 38.0, d1 = 0.95;
  // A = R^T D R
  Mat2 a{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      a[i * 2 + j] = r[0 * 2 + i] * d0 * r[0 * 2 + j] + r[1 * 2 + i] * d1 * r[1 * 2 + j];
  a[2] = a[1];
  const Vec2 w_star{0.4, 0.0};
  const Vec2 b{-2.0 * (a[0] * w_star[0] + a[1] * w_star[1]),
               -2.0 * (a[2] * w_star[0] + a[3] * w_star[1])};
  return Quadratic(a, b, 0.0);
}

double Quadratic::value(const Vec2& w) const {
  const double aw0 = a_[0] * w[0] + a_[1] * w[1];
  const double aw1 = a_[2] * w[0] + a_[3] * w[1];
  return w[0] * aw0 + w[1] * aw1 + b_[0] * w[0] + b_[1] * w[1] + c_;
}

Vec2 Quadratic::gradient(const Vec2& w) const {
  return {2.0 * (a_[0] * w[0] + a_[1] * w[1]) + b_[0],
          2.0 * (a_[2] * w[0] + a_[3] * w[1]) + b_[1]};
}

Mat2 Quadratic::hessian() const { return {2.0 * a_[0], 2.0 * a_[1], 2.0 * a_[2], 2.0 * a_[3]}; }

Vec2 Quadratic::minimizer() const {
  // Solve 2 A w = -b.
  const Mat2 h = hessian();
  const double det = h[0] * h[3] - h[1] * h[2];
  return {(-b_[0] * h[3] + b_[1] * h[1]) / det, (-b_[1] * h[0] + b_[0] * h[2]) / det};
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kGd: return "gd";
    case Method::kEgFirstOrder: return "eg1";
    case Method::kEgFullHessian: return "eg2";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "gd") return Method::kGd;
  if (name == "eg1") return Method::kEgFirstOrder;
  if (name == "eg2") return Method::kEgFullHessian;
  throw Error("unknown method '" + std::string(name) + "' (expected gd, eg1 or eg2)");
}

Vec2 gd_step(const Quadratic& q, const Vec2& w, double eta) {
  const Vec2 g = q.gradient(w);
  return {w[0] - eta * g[0], w[1] - eta * g[1]};
}

Vec2 eg_first_order_step(const Quadratic& q, const Vec2& w, double eta, double gamma) {
  const Vec2 g = q.gradient(w);
  const Vec2 ahead{w[0] - gamma * g[0], w[1] - gamma * g[1]};
  const Vec2 ga = q.gradient(ahead);
  return {w[0] - eta * ga[0], w[1] - eta * ga[1]};
}

Vec2 eg_full_hessian_step(const Quadratic& q, const Vec2& w, double eta, double gamma) {
  const Vec2 g = q.gradient(w);
  const Vec2 ahead{w[0] - gamma * g[0], w[1] - gamma * g[1]};
  const Vec2 ga = q.gradient(ahead);
  const Mat2 h = q.hessian();
  // d/dw f(w - gamma grad f(w)) = (I - gamma H)^T grad f(ahead); H is symmetric.
  const Vec2 total{ga[0] - gamma * (h[0] * ga[0] + h[1] * ga[1]),
                   ga[1] - gamma * (h[2] * ga[0] + h[3] * ga[1])};
  return {w[0] - eta * total[0], w[1] - eta * total[1]};
}

std::size_t Trajectory::steps_to_converge(double tol) const {
  for (std::size_t i = 0; i < grad_norms.size(); ++i)
    if (grad_norms[i] < tol) return i;
  return static_cast<std::size_t>(-1);
}

Trajectory run(const Quadratic& q, Method method, const Vec2& start, double eta, double gamma,
               std::size_t steps) {
  Trajectory t;
  t.method = method;
  t.eta = eta;
  t.gamma = gamma;
  auto record = [&](const Vec2& w) {
    const Vec2 g = q.gradient(w);
    t.points.push_back(w);
    t.values.push_back(q.value(w));
    t.grad_norms.push_back(std::hypot(g[0], g[1]));
  };
  record(start);
  Vec2 w = start;
  for (std::size_t k = 0; k < steps; ++k) {
    switch (method) {
      case Method::kGd: w = gd_step(q, w, eta); break;
      case Method::kEgFirstOrder: w = eg_first_order_step(q, w, eta, gamma); break;
      case Method::kEgFullHessian: w = eg_full_hessian_step(q, w, eta, gamma); break;
    }
    if (!std::isfinite(w[0]) || !std::isfinite(w[1]) || !std::isfinite(q.value(w))) {
      t.diverged = true;
      break;
    }
    record(w);
  }
  return t;
}

Trajectory gd_trajectory(const Quadratic& q, const Vec2& start, double eta, std::size_t steps) {
  return run(q, Method::kGd, start, eta, 0.0, steps);
}

Trajectory eg_first_order_trajectory(const Quadratic& q, const Vec2& start, double eta,
                                     double gamma, std::size_t steps) {
  return run(q, Method::kEgFirstOrder, start, eta, gamma, steps);
}

Trajectory eg_full_hessian_trajectory(const Quadratic& q, const Vec2& start, double eta,
                                      double gamma, std::size_t steps) {
  return run(q, Method::kEgFullHessian, start, eta, gamma, steps);
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

constexpr const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};

std::array<double, 4> plot_box(const Quadratic& q, const std::vector<Trajectory>& ts,
                               const ContourGrid& grid) {
  if (grid.box[1] > grid.box[0] || grid.box[3] > grid.box[2]) {
    if (!(grid.box[1] > grid.box[0] && grid.box[3] > grid.box[2]))
      throw Error("render: degenerate bounding box");
    return grid.box;
  }
  const Vec2 m = q.minimizer();
  double reach = 0.0;
  for (const Trajectory& t : ts)
    reach = std::max(reach, std::hypot(t.points[0][0] - m[0], t.points[0][1] - m[1]));
  double x0 = m[0], x1 = m[0], y0 = m[1], y1 = m[1];
  for (const Trajectory& t : ts)
    for (const Vec2& p : t.points) {
      // Diverging runs would otherwise stretch the box without bound.
      if (std::hypot(p[0] - m[0], p[1] - m[1]) > 3.0 * reach) continue;
      x0 = std::min(x0, p[0]);
      x1 = std::max(x1, p[0]);
      y0 = std::min(y0, p[1]);
      y1 = std::max(y1, p[1]);
    }
  const double w = x1 - x0, h = y1 - y0;
  if (!(w > 1e-12) || !(h > 1e-12)) throw Error("render: degenerate bounding box");
  return {x0 - 0.1 * w, x1 + 0.1 * w, y0 - 0.1 * h, y1 + 0.1 * h};
}

}  // namespace

std::string render_svg(const Quadratic& q, const std::vector<Trajectory>& ts,
                       const ContourGrid& grid) {
  if (ts.empty()) throw Error("render: need at least one trajectory");
  for (const Trajectory& t : ts)
    if (t.points.empty()) throw Error("render: empty trajectory");
  if (grid.nx < 2 || grid.ny < 2) throw Error("render: contour grid needs at least 2x2 samples");
  const auto box = plot_box(q, ts, grid);
  const double sx = grid.width / (box[1] - box[0]);
  const double sy = grid.height / (box[3] - box[2]);
  auto px = [&](double x) { return (x - box[0]) * sx; };
  auto py = [&](double y) { return grid.height - (y - box[2]) * sy; };

  std::vector<double> f(grid.nx * grid.ny);
  auto gx = [&](std::size_t i) {
    return box[0] + (box[1] - box[0]) * static_cast<double>(i) / static_cast<double>(grid.nx - 1);
  };
  auto gy = [&](std::size_t j) {
    return box[2] + (box[3] - box[2]) * static_cast<double>(j) / static_cast<double>(grid.ny - 1);
  };
  double fmax = -INFINITY;
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      f[j * grid.nx + i] = q.value({gx(i), gy(j)});
      fmax = std::max(fmax, f[j * grid.nx + i]);
    }
  const double fmin = q.value(q.minimizer());

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt("%.0f", grid.width)
     << "\" height=\"" << fmt("%.0f", grid.height) << "\" viewBox=\"0 0 "
     << fmt("%.0f", grid.width) << ' ' << fmt("%.0f", grid.height) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<g class=\"contours\" fill=\"none\" stroke=\"#999\" stroke-width=\"0.8\">\n";
  for (std::size_t l = 1; l <= grid.levels; ++l) {
    const double frac = static_cast<double>(l) / static_cast<double>(grid.levels + 1);
    const double level = fmin + (fmax - fmin) * frac * frac;
    std::ostringstream path;
    // Marching squares, one segment per crossed cell.
    for (std::size_t j = 0; j + 1 < grid.ny; ++j)
      for (std::size_t i = 0; i + 1 < grid.nx; ++i) {
        const double c[4] = {f[j * grid.nx + i], f[j * grid.nx + i + 1],
                             f[(j + 1) * grid.nx + i + 1], f[(j + 1) * grid.nx + i]};
        const Vec2 corner[4] = {{gx(i), gy(j)}, {gx(i + 1), gy(j)}, {gx(i + 1), gy(j + 1)},
                                {gx(i), gy(j + 1)}};
        Vec2 hits[4];
        int n = 0;
        for (int e = 0; e < 4; ++e) {
          const double a = c[e] - level, b = c[(e + 1) % 4] - level;
          if ((a < 0.0) == (b < 0.0)) continue;
          const double s = a / (a - b);
          const Vec2& p0 = corner[e];
          const Vec2& p1 = corner[(e + 1) % 4];
          hits[n++] = {p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])};
        }
        for (int k = 0; k + 1 < n; k += 2)
          path << 'M' << fmt("%.2f", px(hits[k][0])) << ',' << fmt("%.2f", py(hits[k][1]))
               << 'L' << fmt("%.2f", px(hits[k + 1][0])) << ','
               << fmt("%.2f", py(hits[k + 1][1]));
      }
    const std::string d = path.str();
    if (!d.empty()) os << "<path d=\"" << d << "\"/>\n";
  }
  os << "</g>\n";

  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Trajectory& t = ts[k];
    const char* color = kColors[k % std::size(kColors)];
    os << "<g class=\"trajectory\" data-method=\"" << method_name(t.method) << "\" data-eta=\""
       << fmt("%g", t.eta) << "\" data-gamma=\"" << fmt("%g", t.gamma) << "\">\n";
    if (t.points.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < t.points.size(); ++i) {
        if (i) os << ' ';
        os << fmt("%.2f", px(t.points[i][0])) << ',' << fmt("%.2f", py(t.points[i][1]));
      }
      os << "\"/>\n";
    }
    for (const Vec2& p : t.points)
      os << "<circle class=\"marker\" cx=\"" << fmt("%.2f", px(p[0])) << "\" cy=\""
         << fmt("%.2f", py(p[1])) << "\" r=\"2\" fill=\"" << color << "\"/>\n";
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_csv(const std::vector<Trajectory>& ts) {
  std::ostringstream os;
  os << "method,step,w1,w2,f,gradnorm\n";
  for (const Trajectory& t : ts)
    for (std::size_t i = 0; i < t.points.size(); ++i)
      os << method_name(t.method) << ',' << i << ',' << fmt("%.17g", t.points[i][0]) << ','
         << fmt("%.17g", t.points[i][1]) << ',' << fmt("%.17g", t.values[i]) << ','
         << fmt("%.17g", t.grad_norms[i]) << '\n';
  return os.str();
}

}  // namespace loant::quad
