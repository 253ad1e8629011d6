#include "patchlab/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/simd.hpp"

namespace patchlab {

CategoryDistribution::CategoryDistribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty()) throw ShapeError("CategoryDistribution: k must be >= 1");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw ContractError("CategoryDistribution: negative entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("CategoryDistribution: entries sum to " +
                        std::to_string(sum));
  }
}

CategoryDistribution CategoryDistribution::one_hot(std::size_t k,
                                                   std::size_t index) {
  if (index >= k) throw ContractError("one_hot: index out of range");
  std::vector<double> p(k, 0.0);
  p[index] = 1.0;
  return CategoryDistribution(std::move(p));
}

std::size_t CategoryDistribution::argmax() const {
  return static_cast<std::size_t>(
      std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

CategoryDistribution mix_labels(const CategoryDistribution& y_a,
                                const CategoryDistribution& y_b, double ratio,
                                double eps, std::size_t k) {
  if (y_a.k() != k || y_b.k() != k) {
    throw ShapeError("mix_labels: label sizes " + std::to_string(y_a.k()) + ", " +
                     std::to_string(y_b.k()) + " do not match k=" + std::to_string(k));
  }
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ContractError("mix_labels: r outside [0, 1]");
  if (!(eps >= 0.0 && eps < 1.0)) throw ContractError("mix_labels: eps outside [0, 1)");
  std::vector<double> out(k);
  const double floor_mass = eps / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = (1.0 - eps) * ((1.0 - ratio) * y_a[i] + ratio * y_b[i]) + floor_mass;
  }
  return CategoryDistribution(std::move(out));
}

ImageTensor patch_mix(const ImageTensor& x_a, const ImageTensor& x_b,
                      const PatchMask& mask) {
  require_same_shape(x_a, x_b, "patch_mix");
  const PatchGrid& g = mask.grid();
  if (!g.matches(x_a)) {
    throw ShapeError("patch_mix: mask grid covers " + std::to_string(g.image_height()) +
                     "x" + std::to_string(g.image_width()) + ", image is " +
                     std::to_string(x_a.height()) + "x" + std::to_string(x_a.width()));
  }
  ImageTensor out = x_a;
  auto dst = out.mutable_data();
  const auto src = x_b.data();
  const std::size_t c = x_a.channels();
  const std::size_t row_stride = x_a.width() * c;
  for (std::size_t p = 0; p < g.n_patches(); ++p) {
    if (!mask.test(p)) continue;
    const std::size_t r0 = patch_row0(g, p);
    const std::size_t c0 = patch_col0(g, p);
    for (std::size_t r = r0; r < r0 + g.patch_h; ++r) {
      const std::size_t off = r * row_stride + c0 * c;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(off), g.patch_w * c,
                  dst.begin() + static_cast<std::ptrdiff_t>(off));
    }
  }
  return out;
}

ImageTensor mixup(const ImageTensor& x_a, const ImageTensor& x_b, double lam) {
  require_same_shape(x_a, x_b, "mixup");
  if (!(lam >= 0.0 && lam <= 1.0)) throw ContractError("mixup: lam outside [0, 1]");
  ImageTensor out(x_a.height(), x_a.width(), x_a.channels());
  simd::kernels().lerp(x_a.data().data(), x_b.data().data(),
                       static_cast<float>(lam), out.mutable_data().data(),
                       x_a.size());
  return out;
}

CutBox sample_cut_box(std::size_t height, std::size_t width, double lam,
                      SeededRandomSource& rng) {
  if (!(lam >= 0.0 && lam <= 1.0)) throw ContractError("cutmix: lam outside [0, 1]");
  const double cut = std::sqrt(1.0 - lam);
  const auto cut_h = static_cast<std::ptrdiff_t>(static_cast<double>(height) * cut);
  const auto cut_w = static_cast<std::ptrdiff_t>(static_cast<double>(width) * cut);
  const auto cy = static_cast<std::ptrdiff_t>(rng.uniform_index(height));
  const auto cx = static_cast<std::ptrdiff_t>(rng.uniform_index(width));
  const auto clip = [](std::ptrdiff_t v, std::size_t hi) {
    return static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(hi)));
  };
  CutBox box;
  box.top = clip(cy - cut_h / 2, height);
  box.bottom = clip(cy + cut_h / 2, height);
  box.left = clip(cx - cut_w / 2, width);
  box.right = clip(cx + cut_w / 2, width);
  return box;
}

ImageTensor paste_box(const ImageTensor& x_a, const ImageTensor& x_b,
                      const CutBox& box) {
  require_same_shape(x_a, x_b, "cutmix");
  if (box.bottom > x_a.height() || box.right > x_a.width() || box.top > box.bottom ||
      box.left > box.right) {
    throw ContractError("cutmix: box outside image");
  }
  ImageTensor out = x_a;
  auto dst = out.mutable_data();
  const auto src = x_b.data();
  const std::size_t c = x_a.channels();
  for (std::size_t r = box.top; r < box.bottom; ++r) {
    const std::size_t off = (r * x_a.width() + box.left) * c;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(off),
                (box.right - box.left) * c,
                dst.begin() + static_cast<std::ptrdiff_t>(off));
  }
  return out;
}

CutmixResult cutmix(const ImageTensor& x_a, const ImageTensor& x_b, double lam,
                    SeededRandomSource& rng) {
  require_same_shape(x_a, x_b, "cutmix");
  const CutBox box = sample_cut_box(x_a.height(), x_a.width(), lam, rng);
  CutmixResult result{paste_box(x_a, x_b, box),
                      static_cast<double>(box.area()) /
                          static_cast<double>(x_a.pixel_count()),
                      box};
  return result;
}

std::string_view method_name(MixMethod m) {
  switch (m) {
    case MixMethod::kMixup:
      return "mixup";
    case MixMethod::kCutmix:
      return "cutmix";
    case MixMethod::kPatchMixing:
      return "patch_mixing";
  }
  return "unknown";
}

void AugmentPolicy::validate() const {
  if (!(beta_alpha > 0.0) || !(beta_beta > 0.0)) {
    throw ContractError("augment policy: Beta parameters must be positive");
  }
  if (!(smoothing_eps >= 0.0 && smoothing_eps < 1.0)) {
    throw ContractError("augment policy: smoothing eps must lie in [0, 1)");
  }
  double sum = 0.0;
  for (double w : method_weights) {
    if (!(w >= 0.0)) throw ContractError("augment policy: negative method weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("augment policy: method weights must sum to 1");
  }
  if (fixed_ratio && !(*fixed_ratio >= 0.0 && *fixed_ratio <= 1.0)) {
    throw ContractError("augment policy: fixed ratio outside [0, 1]");
  }
}

namespace {

MixMethod draw_method(const AugmentPolicy& policy, SeededRandomSource& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    acc += policy.method_weights[i];
    if (u < acc) return static_cast<MixMethod>(i);
  }
  // Rounding left u above the cumulative sum: take the last weighted method.
  for (std::size_t i = 3; i-- > 0;) {
    if (policy.method_weights[i] > 0.0) return static_cast<MixMethod>(i);
  }
  return MixMethod::kPatchMixing;
}

double draw_value(const AugmentPolicy& policy, SeededRandomSource& rng) {
  if (policy.fixed_ratio) return *policy.fixed_ratio;
  return rng.beta(policy.beta_alpha, policy.beta_beta);
}

AugmentResult apply_method(const ImageTensor& x_a, const CategoryDistribution& y_a,
                           const ImageTensor& x_b, const CategoryDistribution& y_b,
                           const AugmentPolicy& policy, MixMethod method,
                           double value, SeededRandomSource& rng) {
  if (y_a.k() != y_b.k()) throw ShapeError("augment_pair: label sizes differ");
  const std::size_t k = y_a.k();
  const double eps = policy.smoothing_eps;
  switch (method) {
    case MixMethod::kMixup: {
      ImageTensor img = mixup(x_a, x_b, value);
      const double r = 1.0 - value;
      return {std::move(img), mix_labels(y_a, y_b, r, eps, k), method, value, r,
              std::nullopt, std::nullopt};
    }
    case MixMethod::kCutmix: {
      CutmixResult cm = cutmix(x_a, x_b, value, rng);
      const double r = cm.achieved_ratio;
      return {std::move(cm.image), mix_labels(y_a, y_b, r, eps, k), method, value,
              r, std::nullopt, cm.box};
    }
    case MixMethod::kPatchMixing: {
      require_same_shape(x_a, x_b, "augment_pair");
      const PatchGrid grid = make_grid(x_a, policy.grid);
      PatchMask mask = sample_patch_mask(grid, value, rng);
      const double r = mask.fraction();
      ImageTensor img = patch_mix(x_a, x_b, mask);
      return {std::move(img), mix_labels(y_a, y_b, r, eps, k), method, value, r,
              std::move(mask), std::nullopt};
    }
  }
  throw ContractError("augment_pair: unknown method");
}

}  // namespace

AugmentResult augment_pair(const ImageTensor& x_a, const CategoryDistribution& y_a,
                           const ImageTensor& x_b, const CategoryDistribution& y_b,
                           const AugmentPolicy& policy, SeededRandomSource& rng) {
  policy.validate();
  const MixMethod method = draw_method(policy, rng);
  const double value = draw_value(policy, rng);
  return apply_method(x_a, y_a, x_b, y_b, policy, method, value, rng);
}

std::vector<AugmentResult> augment_batch(std::span<const LabeledImage> batch,
                                         const AugmentPolicy& policy,
                                         SeededRandomSource& rng) {
  policy.validate();
  std::vector<AugmentResult> out;
  if (batch.empty()) return out;
  std::optional<double> shared;
  if (policy.per_batch_ratio) shared = draw_value(policy, rng);
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LabeledImage& a = batch[i];
    const LabeledImage& b = batch[(i + 1) % batch.size()];
    const MixMethod method = draw_method(policy, rng);
    const double value = shared ? *shared : draw_value(policy, rng);
    out.push_back(apply_method(a.image, a.label, b.image, b.label, policy, method,
                               value, rng));
  }
  return out;
}

}  // namespace patchlab
