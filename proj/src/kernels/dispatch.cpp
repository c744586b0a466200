#include <atomic>
#include <cstdlib>
#include <string_view>

#include "loant/kernels.hpp"

namespace loant::kernels {
namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("LOANT_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table()) return avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() {
  return *current().load(std::memory_order_relaxed);
}

bool select(std::string_view name) {
  for (const KernelTable* t : available()) {
    if (name == t->name) {
      current().store(t, std::memory_order_relaxed);
      return true;
    }
  }
  return false;
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (const KernelTable* t = avx2_table()) out.push_back(t);
  return out;
}

}  // namespace loant::kernels
