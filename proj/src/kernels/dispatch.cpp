#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_internal.hpp"

namespace carbonedge::kernels {

std::string_view to_string(SimdLevel level) {
  switch (level) {
    case SimdLevel::kScalar: return "scalar";
    case SimdLevel::kAvx2: return "avx2";
    case SimdLevel::kNeon: return "neon";
  }
  return "unknown";
}

bool level_supported(SimdLevel level) {
  switch (level) {
    case SimdLevel::kScalar:
      return true;
    case SimdLevel::kAvx2:
#if defined(CARBONEDGE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case SimdLevel::kNeon:
#if defined(CARBONEDGE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(SimdLevel level) {
  if (!level_supported(level)) {
    throw std::invalid_argument("SIMD level not available: " + std::string(to_string(level)));
  }
  switch (level) {
#if defined(CARBONEDGE_HAVE_AVX2)
    case SimdLevel::kAvx2: return detail::kAvx2Table;
#endif
#if defined(CARBONEDGE_HAVE_NEON)
    case SimdLevel::kNeon: return detail::kNeonTable;
#endif
    default: return detail::kScalarTable;
  }
}

namespace {

SimdLevel detect() {
  if (const char* forced = std::getenv("CARBONEDGE_SIMD")) {
    const std::string name(forced);
    for (SimdLevel level : {SimdLevel::kScalar, SimdLevel::kAvx2, SimdLevel::kNeon}) {
      if (name == to_string(level) && level_supported(level)) return level;
    }
    // Unknown or unsupported request: fall through to auto-detection.
  }
  if (level_supported(SimdLevel::kAvx2)) return SimdLevel::kAvx2;
  if (level_supported(SimdLevel::kNeon)) return SimdLevel::kNeon;
  return SimdLevel::kScalar;
}

}  // namespace

SimdLevel active_level() {
  static const SimdLevel level = detect();
  return level;
}

const KernelTable& active() {
  static const KernelTable& t = table(active_level());
  return t;
}

}  // namespace carbonedge::kernels
