#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/image.hpp"

namespace patchlab {

class SeededRandomSource;

/// Partition of an image into rows x cols equal rectangles.
struct PatchGrid {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;

  std::size_t n_patches() const noexcept { return rows * cols; }
  std::size_t image_height() const noexcept { return rows * patch_h; }
  std::size_t image_width() const noexcept { return cols * patch_w; }
  bool matches(const ImageTensor& img) const noexcept {
    return img.height() == image_height() && img.width() == image_width();
  }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Grid geometry requested by the user before an image size is known.
struct GridSpec {
  std::size_t rows = 7;
  std::size_t cols = 7;

  /// Parses "RxC" (e.g. "7x7", "14x14").
  static GridSpec parse(std::string_view text);
  std::string str() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Throws DivisibilityError naming every offending axis.
PatchGrid make_grid(std::size_t img_h, std::size_t img_w, std::size_t rows,
                    std::size_t cols);
inline PatchGrid make_grid(const ImageTensor& img, GridSpec spec) {
  return make_grid(img.height(), img.width(), spec.rows, spec.cols);
}

/// Per-patch binary mask; true marks a replaced / out-of-context patch.
class PatchMask {
 public:
  PatchMask() = default;
  explicit PatchMask(PatchGrid grid);
  PatchMask(PatchGrid grid, std::vector<bool> bits);

  const PatchGrid& grid() const noexcept { return grid_; }
  const std::vector<bool>& bits() const noexcept { return bits_; }
  bool test(std::size_t patch) const { return bits_.at(patch); }
  void set(std::size_t patch, bool value = true) { bits_.at(patch) = value; }
  std::size_t popcount() const noexcept;
  /// popcount / n_patches
  double fraction() const noexcept;

  /// Compact text form `RxC:hex`, bit i is patch i (row-major), packed
  /// most-significant-bit first per nibble.
  std::string to_text() const;
  /// Inverse of to_text; `img_h`/`img_w` recover patch extents.
  static PatchMask from_text(std::string_view text, std::size_t img_h,
                             std::size_t img_w);

  friend bool operator==(const PatchMask&, const PatchMask&) = default;

 private:
  PatchGrid grid_;
  std::vector<bool> bits_;
};

/// Single-channel image: 1.0 inside true patches, 0.0 elsewhere.
ImageTensor mask_to_pixel_field(const PatchMask& mask);

/// round(r * N) clamped to [0, N].
std::size_t patches_for_ratio(std::size_t n_patches, double ratio);

/// Exactly patches_for_ratio(N, ratio) distinct patches, uniform without
/// replacement.
PatchMask sample_patch_mask(const PatchGrid& grid, double ratio,
                            SeededRandomSource& rng);

/// Top-left pixel of patch `index`.
inline std::size_t patch_row0(const PatchGrid& g, std::size_t index) {
  return (index / g.cols) * g.patch_h;
}
inline std::size_t patch_col0(const PatchGrid& g, std::size_t index) {
  return (index % g.cols) * g.patch_w;
}

/// Largest centered crop whose extent is divisible by the grid.
ImageTensor center_crop_to_grid(const ImageTensor& img, GridSpec spec);

}  // namespace patchlab
