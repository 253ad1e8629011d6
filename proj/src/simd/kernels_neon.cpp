// NEON kernels for aarch64. Min/max go through compare+select so signed
// zeros resolve the same way as the x86-ordered scalar reference.

#include <arm_neon.h>

#include "patchlab/simd.hpp"

namespace patchlab::simd {
namespace {

inline float32x4_t min_ps(float32x4_t x, float32x4_t y) {
  return vbslq_f32(vcltq_f32(x, y), x, y);
}
inline float32x4_t max_ps(float32x4_t x, float32x4_t y) {
  return vbslq_f32(vcgtq_f32(x, y), x, y);
}

void lerp(const float* a, const float* b, float lam, float* out,
          std::size_t n) {
  const float rest = 1.0f - lam;
  const float32x4_t vl = vdupq_n_f32(lam);
  const float32x4_t vr = vdupq_n_f32(rest);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    const float32x4_t v = vaddq_f32(vmulq_f32(vl, va), vmulq_f32(vr, vb));
    vst1q_f32(out + i, min_ps(max_ps(v, min_ps(va, vb)), max_ps(va, vb)));
  }
  for (; i < n; ++i) {
    const float v = lam * a[i] + rest * b[i];
    const float lo = a[i] < b[i] ? a[i] : b[i];
    const float hi = a[i] > b[i] ? a[i] : b[i];
    const float c = v > lo ? v : lo;
    out[i] = c < hi ? c : hi;
  }
}

void scale_pixels(const float* x, const float* m, float* out,
                  std::size_t n_pixels, std::size_t channels) {
  std::size_t p = 0;
  if (channels == 1) {
    for (; p + 4 <= n_pixels; p += 4) {
      vst1q_f32(out + p, vmulq_f32(vld1q_f32(x + p), vld1q_f32(m + p)));
    }
  } else if (channels == 3) {
    for (; p + 4 <= n_pixels; p += 4) {
      float32x4x3_t px = vld3q_f32(x + p * 3);
      const float32x4_t vm = vld1q_f32(m + p);
      px.val[0] = vmulq_f32(px.val[0], vm);
      px.val[1] = vmulq_f32(px.val[1], vm);
      px.val[2] = vmulq_f32(px.val[2], vm);
      vst3q_f32(out + p * 3, px);
    }
  } else if (channels == 4) {
    for (; p + 4 <= n_pixels; p += 4) {
      float32x4x4_t px = vld4q_f32(x + p * 4);
      const float32x4_t vm = vld1q_f32(m + p);
      for (int c = 0; c < 4; ++c) px.val[c] = vmulq_f32(px.val[c], vm);
      vst4q_f32(out + p * 4, px);
    }
  }
  for (; p < n_pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      out[p * channels + c] = x[p * channels + c] * m[p];
    }
  }
}

void axpy(double* acc, const float* m, double w, std::size_t n) {
  const float64x2_t vw = vdupq_n_f64(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vm = vld1q_f32(m + i);
    const float64x2_t lo = vcvt_f64_f32(vget_low_f32(vm));
    const float64x2_t hi = vcvt_high_f64_f32(vm);
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), vmulq_f64(vw, lo)));
    vst1q_f64(acc + i + 2, vaddq_f64(vld1q_f64(acc + i + 2), vmulq_f64(vw, hi)));
  }
  for (; i < n; ++i) acc[i] += w * static_cast<double>(m[i]);
}

double dot_f32(const float* a, const float* b, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    acc01 = vaddq_f64(acc01, vmulq_f64(vcvt_f64_f32(vget_low_f32(va)),
                                       vcvt_f64_f32(vget_low_f32(vb))));
    acc23 = vaddq_f64(acc23,
                      vmulq_f64(vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb)));
  }
  double s = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
             (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double dot_f64_f32(const double* a, const float* b, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vb = vld1q_f32(b + i);
    acc01 = vaddq_f64(acc01,
                      vmulq_f64(vld1q_f64(a + i), vcvt_f64_f32(vget_low_f32(vb))));
    acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(a + i + 2), vcvt_high_f64_f32(vb)));
  }
  double s = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
             (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (; i < n; ++i) s += a[i] * static_cast<double>(b[i]);
  return s;
}

}  // namespace

namespace detail {
const KernelTable kNeonKernels{Isa::kNeon, lerp,    scale_pixels,
                               axpy,       dot_f32, dot_f64_f32};
}  // namespace detail

}  // namespace patchlab::simd
