#include <atomic>
#include <cstdlib>
#include <string>

#include "clqg/kernels.hpp"

namespace clqg::kernels {
namespace {

Backend initial_backend() {
  if (const char* env = std::getenv("CLQG_KERNELS")) {
    if (std::string(env) == "scalar") return Backend::scalar;
  }
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

Backend active_backend() { return current().load(std::memory_order_relaxed); }

bool set_backend(Backend backend) {
  if (backend == Backend::avx2 && !avx2_available()) {
    current().store(Backend::scalar, std::memory_order_relaxed);
    return false;
  }
  current().store(backend, std::memory_order_relaxed);
  return true;
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

template <typename Real>
const KernelTable<Real>& active() {
  if (active_backend() == Backend::avx2) {
    if (const auto* table = avx2_kernels<Real>()) return *table;
  }
  return scalar_kernels<Real>();
}

template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace clqg::kernels
