#include <cmath>

#include "loant/kernels.hpp"

namespace loant::kernels {
namespace {

void add_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(std::size_t n, double alpha, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

double dot_scalar(std::size_t n, const double* a, const double* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemm_nn_scalar(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn_scalar(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void gemm_nt_scalar(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += dot_scalar(k, a + i * k, b + j * k);
}

void adam_scalar(std::size_t n, double* w, const double* g, double* m,
                 double* v, const AdamParams& p) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
    const double mhat = m[i] / p.bias1;
    const double vhat = v[i] / p.bias2;
    w[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

constexpr KernelTable kScalar{
    "scalar",       add_scalar,     mul_scalar,     axpy_scalar,
    scale_scalar,   dot_scalar,     gemm_nn_scalar, gemm_tn_scalar,
    gemm_nt_scalar, adam_scalar,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace loant::kernels
