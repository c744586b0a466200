#pragma once

// Dense double-precision inner loops. Every kernel has a scalar reference
// and, on x86-64 hosts with AVX2+FMA, a vectorized variant. The active
// table is chosen once at startup from CPUID and can be pinned with the
// LOANT_SIMD environment variable ("scalar" or "avx2").

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace loant::kernels {

struct AdamParams {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

struct KernelTable {
  const char* name;
  // out = a + b
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  // out = a * b (elementwise)
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out = alpha * x
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
  double (*dot)(std::size_t n, const double* a, const double* b);
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c);
  void (*adam)(std::size_t n, double* w, const double* g, double* m, double* v,
               const AdamParams& p);
};

const KernelTable& scalar_table();
/// nullptr when the host lacks AVX2/FMA or the build targets another ISA.
const KernelTable* avx2_table();

const KernelTable& active();
/// Pins the active table by name; returns false if unavailable.
bool select(std::string_view name);
std::vector<const KernelTable*> available();

inline void add(std::span<const double> a, std::span<const double> b,
                std::span<double> out) {
  active().add(out.size(), a.data(), b.data(), out.data());
}
inline void mul(std::span<const double> a, std::span<const double> b,
                std::span<double> out) {
  active().mul(out.size(), a.data(), b.data(), out.data());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(y.size(), alpha, x.data(), y.data());
}
inline void scale(double alpha, std::span<const double> x,
                  std::span<double> out) {
  active().scale(out.size(), alpha, x.data(), out.data());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.size(), a.data(), b.data());
}

}  // namespace loant::kernels
