// AVX2 kernels. Compiled with -mavx2 (no FMA: contraction would change
// rounding relative to the scalar reference); only reached after a runtime
// CPU check.

#include <immintrin.h>

#include "patchlab/simd.hpp"

namespace patchlab::simd {
namespace {

void lerp(const float* a, const float* b, float lam, float* out,
          std::size_t n) {
  const float rest = 1.0f - lam;
  const __m256 vl = _mm256_set1_ps(lam);
  const __m256 vr = _mm256_set1_ps(rest);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    const __m256 v = _mm256_add_ps(_mm256_mul_ps(vl, va), _mm256_mul_ps(vr, vb));
    const __m256 lo = _mm256_min_ps(va, vb);
    const __m256 hi = _mm256_max_ps(va, vb);
    _mm256_storeu_ps(out + i, _mm256_min_ps(_mm256_max_ps(v, lo), hi));
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
    for (; p + 8 <= n_pixels; p += 8) {
      _mm256_storeu_ps(out + p, _mm256_mul_ps(_mm256_loadu_ps(x + p),
                                              _mm256_loadu_ps(m + p)));
    }
  } else if (channels == 3) {
    // 8 pixels = 24 samples = 3 vectors; spread each mask value over 3 lanes.
    const __m256i i0 = _mm256_setr_epi32(0, 0, 0, 1, 1, 1, 2, 2);
    const __m256i i1 = _mm256_setr_epi32(2, 3, 3, 3, 4, 4, 4, 5);
    const __m256i i2 = _mm256_setr_epi32(5, 5, 6, 6, 6, 7, 7, 7);
    for (; p + 8 <= n_pixels; p += 8) {
      const __m256 vm = _mm256_loadu_ps(m + p);
      const float* xs = x + p * 3;
      float* os = out + p * 3;
      _mm256_storeu_ps(os, _mm256_mul_ps(_mm256_loadu_ps(xs),
                                         _mm256_permutevar8x32_ps(vm, i0)));
      _mm256_storeu_ps(os + 8, _mm256_mul_ps(_mm256_loadu_ps(xs + 8),
                                             _mm256_permutevar8x32_ps(vm, i1)));
      _mm256_storeu_ps(os + 16, _mm256_mul_ps(_mm256_loadu_ps(xs + 16),
                                              _mm256_permutevar8x32_ps(vm, i2)));
    }
  } else if (channels == 4) {
    const __m256i i0 = _mm256_setr_epi32(0, 0, 0, 0, 1, 1, 1, 1);
    const __m256i i1 = _mm256_setr_epi32(2, 2, 2, 2, 3, 3, 3, 3);
    const __m256i i2 = _mm256_setr_epi32(4, 4, 4, 4, 5, 5, 5, 5);
    const __m256i i3 = _mm256_setr_epi32(6, 6, 6, 6, 7, 7, 7, 7);
    for (; p + 8 <= n_pixels; p += 8) {
      const __m256 vm = _mm256_loadu_ps(m + p);
      const float* xs = x + p * 4;
      float* os = out + p * 4;
      _mm256_storeu_ps(os, _mm256_mul_ps(_mm256_loadu_ps(xs),
                                         _mm256_permutevar8x32_ps(vm, i0)));
      _mm256_storeu_ps(os + 8, _mm256_mul_ps(_mm256_loadu_ps(xs + 8),
                                             _mm256_permutevar8x32_ps(vm, i1)));
      _mm256_storeu_ps(os + 16, _mm256_mul_ps(_mm256_loadu_ps(xs + 16),
                                              _mm256_permutevar8x32_ps(vm, i2)));
      _mm256_storeu_ps(os + 24, _mm256_mul_ps(_mm256_loadu_ps(xs + 24),
                                              _mm256_permutevar8x32_ps(vm, i3)));
    }
  }
  for (; p < n_pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      out[p * channels + c] = x[p * channels + c] * m[p];
    }
  }
}

void axpy(double* acc, const float* m, double w, std::size_t n) {
  const __m256d vw = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vm = _mm256_loadu_ps(m + i);
    const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(vm));
    const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(vm, 1));
    _mm256_storeu_pd(acc + i,
                     _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_mul_pd(vw, lo)));
    _mm256_storeu_pd(acc + i + 4, _mm256_add_pd(_mm256_loadu_pd(acc + i + 4),
                                                _mm256_mul_pd(vw, hi)));
  }
  for (; i < n; ++i) acc[i] += w * static_cast<double>(m[i]);
}

double reduce_lanes(__m256d v) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_f32(const float* a, const float* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  double s = reduce_lanes(acc);
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double dot_f64_f32(const double* a, const float* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), vb));
  }
  double s = reduce_lanes(acc);
  for (; i < n; ++i) s += a[i] * static_cast<double>(b[i]);
  return s;
}

}  // namespace

namespace detail {
const KernelTable kAvx2Kernels{Isa::kAvx2, lerp,    scale_pixels,
                               axpy,       dot_f32, dot_f64_f32};
}  // namespace detail

}  // namespace patchlab::simd
