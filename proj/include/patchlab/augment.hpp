#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "patchlab/grid.hpp"
#include "patchlab/image.hpp"

namespace patchlab {

class SeededRandomSource;

/// Probability vector over k categories.
class CategoryDistribution {
 public:
  /// Validates: non-negative entries summing to 1 within 1e-9.
  explicit CategoryDistribution(std::vector<double> probs);
  static CategoryDistribution one_hot(std::size_t k, std::size_t index);

  std::size_t k() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_.at(i); }
  std::size_t argmax() const;

 private:
  std::vector<double> probs_;
};

/// ỹ = (1-eps) * ((1-r) * y_a + r * y_b) + eps / k
CategoryDistribution mix_labels(const CategoryDistribution& y_a,
                                const CategoryDistribution& y_b, double ratio,
                                double eps, std::size_t k);

/// Pixels of x_b where the mask is set, x_a elsewhere. Bit-exact copy.
ImageTensor patch_mix(const ImageTensor& x_a, const ImageTensor& x_b,
                      const PatchMask& mask);

/// Convex blend lam * x_a + (1 - lam) * x_b.
ImageTensor mixup(const ImageTensor& x_a, const ImageTensor& x_b, double lam);

/// Half-open pixel rectangle [top, bottom) x [left, right).
struct CutBox {
  std::size_t top = 0, left = 0, bottom = 0, right = 0;
  std::size_t area() const noexcept { return (bottom - top) * (right - left); }
};

/// Rectangle of nominal area (1 - lam) * H * W centred uniformly at random
/// and clipped to the image.
CutBox sample_cut_box(std::size_t height, std::size_t width, double lam,
                      SeededRandomSource& rng);
/// x_a with `box` copied from x_b.
ImageTensor paste_box(const ImageTensor& x_a, const ImageTensor& x_b,
                      const CutBox& box);

struct CutmixResult {
  ImageTensor image;
  /// Clipped rectangle area / (H * W).
  double achieved_ratio = 0.0;
  CutBox box;
};
CutmixResult cutmix(const ImageTensor& x_a, const ImageTensor& x_b, double lam,
                    SeededRandomSource& rng);

enum class MixMethod { kMixup = 0, kCutmix = 1, kPatchMixing = 2 };
std::string_view method_name(MixMethod m);

struct AugmentPolicy {
  double beta_alpha = 0.3;
  double beta_beta = 0.3;
  double smoothing_eps = 0.1;
  /// Selection weights over {mixup, cutmix, patch_mixing}.
  std::array<double, 3> method_weights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  GridSpec grid{7, 7};
  /// When set, replaces the Beta draw.
  std::optional<double> fixed_ratio;
  /// One Beta draw per batch instead of per pair (augment_batch only).
  bool per_batch_ratio = false;

  /// Throws ContractError on an invalid policy.
  void validate() const;
};

struct AugmentResult {
  ImageTensor image;
  CategoryDistribution label;
  MixMethod method;
  /// The mixing draw: lam for mixup/cutmix, r for patch mixing.
  double drawn = 0.0;
  /// Share of the label taken from y_b, before smoothing.
  double label_ratio = 0.0;
  std::optional<PatchMask> mask;
  std::optional<CutBox> box;
};

/// Draws a method by weight, a mixing value from Beta(alpha, beta) (or the
/// fixed ratio), applies it, and mixes labels with the ratio actually
/// realised in the image.
AugmentResult augment_pair(const ImageTensor& x_a, const CategoryDistribution& y_a,
                           const ImageTensor& x_b, const CategoryDistribution& y_b,
                           const AugmentPolicy& policy, SeededRandomSource& rng);

struct LabeledImage {
  ImageTensor image;
  CategoryDistribution label;
};

/// Pairs sample i with sample (i + 1) mod n. Honors per_batch_ratio.
std::vector<AugmentResult> augment_batch(std::span<const LabeledImage> batch,
                                         const AugmentPolicy& policy,
                                         SeededRandomSource& rng);

}  // namespace patchlab
