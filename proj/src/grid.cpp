#include "patchlab/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>

#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab {
namespace {

std::size_t parse_count(std::string_view text, std::string_view whole) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ContractError("invalid grid '" + std::string(whole) +
                        "', expected RxC such as 7x7");
  }
  return value;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

GridSpec GridSpec::parse(std::string_view text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string_view::npos) {
    throw ContractError("invalid grid '" + std::string(text) +
                        "', expected RxC such as 7x7");
  }
  GridSpec spec{parse_count(text.substr(0, x), text),
                parse_count(text.substr(x + 1), text)};
  if (spec.rows == 0 || spec.cols == 0) {
    throw ContractError("grid '" + std::string(text) + "' has an empty axis");
  }
  return spec;
}

std::string GridSpec::str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

PatchGrid make_grid(std::size_t img_h, std::size_t img_w, std::size_t rows,
                    std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ContractError("make_grid: rows and cols must be >= 1");
  }
  const bool bad_h = img_h % rows != 0;
  const bool bad_w = img_w % cols != 0;
  if (bad_h || bad_w) {
    std::string msg = "grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " does not divide image " + std::to_string(img_h) + "x" +
                      std::to_string(img_w) + ":";
    if (bad_h) {
      msg += " height " + std::to_string(img_h) + " % rows " +
             std::to_string(rows) + " != 0;";
    }
    if (bad_w) {
      msg += " width " + std::to_string(img_w) + " % cols " +
             std::to_string(cols) + " != 0;";
    }
    throw DivisibilityError(msg);
  }
  return PatchGrid{rows, cols, img_h / rows, img_w / cols};
}

PatchMask::PatchMask(PatchGrid grid)
    : grid_(grid), bits_(grid.n_patches(), false) {}

PatchMask::PatchMask(PatchGrid grid, std::vector<bool> bits)
    : grid_(grid), bits_(std::move(bits)) {
  if (bits_.size() != grid_.n_patches()) {
    throw ShapeError("PatchMask: " + std::to_string(bits_.size()) +
                     " bits for a grid of " + std::to_string(grid_.n_patches()) +
                     " patches");
  }
}

std::size_t PatchMask::popcount() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
}

double PatchMask::fraction() const noexcept {
  return grid_.n_patches() == 0
             ? 0.0
             : static_cast<double>(popcount()) /
                   static_cast<double>(grid_.n_patches());
}

std::string PatchMask::to_text() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = std::to_string(grid_.rows) + "x" + std::to_string(grid_.cols) + ":";
  for (std::size_t i = 0; i < bits_.size(); i += 4) {
    int nibble = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      nibble <<= 1;
      if (i + j < bits_.size() && bits_[i + j]) nibble |= 1;
    }
    out.push_back(kHex[nibble]);
  }
  return out;
}

PatchMask PatchMask::from_text(std::string_view text, std::size_t img_h,
                               std::size_t img_w) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ContractError("mask text '" + std::string(text) + "' lacks ':'");
  }
  const GridSpec spec = GridSpec::parse(text.substr(0, colon));
  const PatchGrid grid = make_grid(img_h, img_w, spec.rows, spec.cols);
  const std::string_view hex = text.substr(colon + 1);
  const std::size_t n = grid.n_patches();
  if (hex.size() != (n + 3) / 4) {
    throw ContractError("mask text has " + std::to_string(hex.size()) +
                        " hex digits, expected " + std::to_string((n + 3) / 4));
  }
  std::vector<bool> bits(n, false);
  for (std::size_t d = 0; d < hex.size(); ++d) {
    const int v = hex_value(hex[d]);
    if (v < 0) throw ContractError("mask text has a non-hex digit");
    for (std::size_t j = 0; j < 4; ++j) {
      const bool bit = (v >> (3 - j)) & 1;
      const std::size_t idx = d * 4 + j;
      if (idx < n) {
        bits[idx] = bit;
      } else if (bit) {
        throw ContractError("mask text sets padding bits");
      }
    }
  }
  return PatchMask(grid, std::move(bits));
}

ImageTensor mask_to_pixel_field(const PatchMask& mask) {
  const PatchGrid& g = mask.grid();
  ImageTensor field(g.image_height(), g.image_width(), 1);
  auto data = field.mutable_data();
  const std::size_t width = g.image_width();
  for (std::size_t p = 0; p < g.n_patches(); ++p) {
    if (!mask.test(p)) continue;
    const std::size_t r0 = patch_row0(g, p);
    const std::size_t c0 = patch_col0(g, p);
    for (std::size_t r = r0; r < r0 + g.patch_h; ++r) {
      std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(r * width + c0),
                  g.patch_w, 1.0f);
    }
  }
  return field;
}

std::size_t patches_for_ratio(std::size_t n_patches, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ContractError("patch ratio must lie in [0, 1]");
  }
  const double n1 = std::floor(ratio * static_cast<double>(n_patches) + 0.5);
  return std::min(n_patches, static_cast<std::size_t>(n1));
}

PatchMask sample_patch_mask(const PatchGrid& grid, double ratio,
                            SeededRandomSource& rng) {
  const std::size_t n = grid.n_patches();
  const std::size_t n1 = patches_for_ratio(n, ratio);
  // Partial Fisher-Yates: the first n1 slots form a uniform n1-subset.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < n1; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(order[i], order[j]);
  }
  PatchMask mask(grid);
  for (std::size_t i = 0; i < n1; ++i) mask.set(order[i]);
  return mask;
}

ImageTensor center_crop_to_grid(const ImageTensor& img, GridSpec spec) {
  const std::size_t h = img.height() - img.height() % spec.rows;
  const std::size_t w = img.width() - img.width() % spec.cols;
  if (h == 0 || w == 0) {
    throw DivisibilityError("image " + std::to_string(img.height()) + "x" +
                            std::to_string(img.width()) +
                            " is smaller than grid " + spec.str());
  }
  const std::size_t top = (img.height() - h) / 2;
  const std::size_t left = (img.width() - w) / 2;
  const std::size_t c = img.channels();
  std::vector<float> out;
  out.reserve(h * w * c);
  const auto src = img.data();
  for (std::size_t r = 0; r < h; ++r) {
    const auto begin = src.begin() +
                       static_cast<std::ptrdiff_t>(((top + r) * img.width() + left) * c);
    out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(w * c));
  }
  return ImageTensor(h, w, c, std::move(out));
}

}  // namespace patchlab
