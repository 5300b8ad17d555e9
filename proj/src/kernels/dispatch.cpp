#include <cstdlib>
#include <string_view>

#include "stzi/kernels.hpp"

namespace stzi::kernels {

#if defined(STZI_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

const KernelTable* avx2Table() {
#if defined(STZI_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& table = []() -> const KernelTable& {
    const char* forced = std::getenv("STZI_SIMD");
    if (forced != nullptr && std::string_view(forced) == "scalar") return scalarTable();
    if (const KernelTable* t = avx2Table()) return *t;
    return scalarTable();
  }();
  return table;
}

}  // namespace stzi::kernels
