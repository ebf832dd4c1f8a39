#include "semibolt/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace semibolt::kern {

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif

bool avx2_available() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const Ops* pick_default() {
  if (const char* env = std::getenv("SEMIBOLT_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
    if (std::strcmp(env, "avx2") == 0 && avx2_available()) return &avx2_ops();
#endif
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_available()) return &avx2_ops();
#endif
  return &scalar_ops();
}

std::atomic<const Ops*> g_active{nullptr};

}  // namespace

const Ops& ops() {
  const Ops* p = g_active.load(std::memory_order_acquire);
  if (!p) {
    p = pick_default();
    g_active.store(p, std::memory_order_release);
  }
  return *p;
}

void force_backend(const char* name) {
  if (std::strcmp(name, "scalar") == 0) {
    g_active.store(&scalar_ops(), std::memory_order_release);
    return;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (std::strcmp(name, "avx2") == 0) {
    if (!avx2_available())
      throw std::invalid_argument("avx2 kernels not supported on this CPU");
    g_active.store(&avx2_ops(), std::memory_order_release);
    return;
  }
#endif
  throw std::invalid_argument(std::string("unknown kernel backend: ") + name);
}

}  // namespace semibolt::kern
