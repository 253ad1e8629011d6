// Reference kernels. The AVX2 and NEON variants must match these bit-for-bit.

#include "patchlab/simd.hpp"

namespace patchlab::simd {
namespace {

// Same operand order as x86 minps/maxps, including signed zeros.
inline float min_ps(float x, float y) { return x < y ? x : y; }
inline float max_ps(float x, float y) { return x > y ? x : y; }

void lerp(const float* a, const float* b, float lam, float* out,
          std::size_t n) {
  const float rest = 1.0f - lam;
  for (std::size_t i = 0; i < n; ++i) {
    const float v = lam * a[i] + rest * b[i];
    out[i] = min_ps(max_ps(v, min_ps(a[i], b[i])), max_ps(a[i], b[i]));
  }
}

void scale_pixels(const float* x, const float* m, float* out,
                  std::size_t n_pixels, std::size_t channels) {
  for (std::size_t p = 0; p < n_pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      out[p * channels + c] = x[p * channels + c] * m[p];
    }
  }
}

void axpy(double* acc, const float* m, double w, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += w * static_cast<double>(m[i]);
}

double dot_f32(const float* a, const float* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      lane[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
    }
  }
  double s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double dot_f64_f32(const double* a, const float* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      lane[j] += a[i + j] * static_cast<double>(b[i + j]);
    }
  }
  double s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) s += a[i] * static_cast<double>(b[i]);
  return s;
}

}  // namespace

namespace detail {
const KernelTable kScalarKernels{Isa::kScalar, lerp,    scale_pixels,
                                 axpy,         dot_f32, dot_f64_f32};
}  // namespace detail

}  // namespace patchlab::simd
