#include <cstdlib>
#include <string>

#include "patchlab/error.hpp"
#include "patchlab/simd.hpp"

namespace patchlab::simd {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(PATCHLAB_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(PATCHLAB_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
  switch (isa) {
#if defined(PATCHLAB_HAVE_AVX2)
    case Isa::kAvx2:
      return detail::kAvx2Kernels;
#endif
#if defined(PATCHLAB_HAVE_NEON)
    case Isa::kNeon:
      return detail::kNeonKernels;
#endif
    default:
      return detail::kScalarKernels;
  }
}

const KernelTable& select_kernels() {
  if (const char* forced = std::getenv("PATCHLAB_SIMD")) {
    const std::string name(forced);
    for (Isa isa : available_isas()) {
      if (isa_name(isa) == name) return table_for(isa);
    }
  }
  return table_for(available_isas().back());
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
    if (cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& kernels_for(Isa isa) {
  if (!cpu_supports(isa)) {
    throw ContractError("SIMD kernels '" + std::string(isa_name(isa)) +
                        "' are not available on this build/CPU");
  }
  return table_for(isa);
}

const KernelTable& kernels() {
  static const KernelTable& selected = select_kernels();
  return selected;
}

}  // namespace patchlab::simd
