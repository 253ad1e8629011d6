#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace patchlab::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Inner-loop kernels. Every variant reproduces the scalar reference
/// bit-for-bit: elementwise kernels perform the same IEEE operations in the
/// same order, and reductions use a fixed 4-lane interleaved order
/// (lane j sums elements i = j mod 4, lanes combined as (l0+l1)+(l2+l3),
/// then the tail is added left to right).
struct KernelTable {
  Isa isa;

  /// out[i] = clamp(lam*a[i] + (1-lam)*b[i], min(a,b), max(a,b))
  void (*lerp)(const float* a, const float* b, float lam, float* out,
               std::size_t n);
  /// out[p*C + c] = x[p*C + c] * m[p], C in {1, 3, 4}
  void (*scale_pixels)(const float* x, const float* m, float* out,
                       std::size_t n_pixels, std::size_t channels);
  /// acc[i] += w * double(m[i])
  void (*axpy)(double* acc, const float* m, double w, std::size_t n);
  /// sum_i double(a[i]) * double(b[i])
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
  /// sum_i a[i] * double(b[i])
  double (*dot_f64_f32)(const double* a, const float* b, std::size_t n);
};

/// Kernels selected at first use: $PATCHLAB_SIMD (scalar|avx2|neon) if set
/// and supported, else the best ISA the CPU supports.
const KernelTable& kernels();

/// ISAs compiled in and supported by this CPU, scalar first.
std::vector<Isa> available_isas();
/// Throws ContractError if `isa` is unavailable.
const KernelTable& kernels_for(Isa isa);

namespace detail {
extern const KernelTable kScalarKernels;
#if defined(PATCHLAB_HAVE_AVX2)
extern const KernelTable kAvx2Kernels;
#endif
#if defined(PATCHLAB_HAVE_NEON)
extern const KernelTable kNeonKernels;
#endif
}  // namespace detail

}  // namespace patchlab::simd
