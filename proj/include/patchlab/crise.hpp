#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "patchlab/grid.hpp"
#include "patchlab/image.hpp"
#include "patchlab/oracle.hpp"

namespace patchlab {

/// Which oracle output c-RISE weights masks by.
enum class ScoreMode { kProbability, kLogit };
std::string_view score_mode_name(ScoreMode mode);
ScoreMode parse_score_mode(std::string_view text);

struct RiseConfig {
  std::size_t n_masks = 14000;
  /// Low-resolution cell size in pixels.
  std::size_t cell_stride = 14;
  /// Bernoulli keep probability p = E[B].
  double keep_prob = 0.5;
  std::uint64_t seed = 0;
  /// Masked images per oracle request; does not affect results.
  std::size_t batch_size = 64;
  ScoreMode mode = ScoreMode::kProbability;
  /// Called after each batch with (masks done, total).
  std::function<void(std::size_t, std::size_t)> progress;

  /// Throws ContractError unless n_masks >= 1, 0 < p < 1 and the image has
  /// at least two cells per axis.
  void validate(std::size_t img_h, std::size_t img_w) const;
};

/// Soft masks in [0, 1], one H*W float plane each.
class MaskBatch {
 public:
  MaskBatch(std::size_t height, std::size_t width, std::size_t count)
      : height_(height), width_(width), count_(count), data_(height * width * count) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t count() const noexcept { return count_; }
  std::size_t plane() const noexcept { return height_ * width_; }
  std::span<const float> mask(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * plane(), plane());
  }
  std::span<float> mask(std::size_t i) {
    return std::span<float>(data_).subspan(i * plane(), plane());
  }

 private:
  std::size_t height_, width_, count_;
  std::vector<float> data_;
};

/// Draws mask `index` of the stream defined by cfg.seed: a Bernoulli(p)
/// grid of (ceil(H/s)+1) x (ceil(W/s)+1) cells, bilinearly upsampled by the
/// cell size s and cropped at a uniform offset in [0, s)^2. Each mask
/// depends only on (seed, index).
void sample_rise_mask(const RiseConfig& cfg, std::size_t img_h, std::size_t img_w,
                      std::size_t index, std::span<float> out);

/// Masks [0, cfg.n_masks) materialized at once; for small images.
MaskBatch generate_rise_masks(const RiseConfig& cfg, std::size_t img_h,
                              std::size_t img_w);

struct SaliencyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  bool normalized = false;

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  std::size_t argmax() const;
};

/// Converts an oracle output to the value used for mask weighting.
double mode_score(const OracleScores& scores, std::size_t category, ScoreMode mode);

/// S(l) = 1/(p N) * sum_i [f(x*B_i) - f'(x*B_i)] * B_i(l), masks drawn from
/// the RISE stream.
SaliencyMap crise_map(const ImageTensor& x, Oracle& oracle, std::size_t category,
                      const RiseConfig& cfg);

/// Same estimator over caller-supplied masks. cfg supplies keep_prob,
/// batch_size, mode and progress; n_masks is taken from `masks`.
SaliencyMap crise_map_from_masks(const ImageTensor& x, Oracle& oracle,
                                 std::size_t category, const MaskBatch& masks,
                                 const RiseConfig& cfg);

/// exp(v) / sum exp(v) over all pixels, shifted by the max.
SaliencyMap softmax_normalize(const SaliencyMap& s);

/// (1/N) * sum_l S(l) * (1 - M(l)), N = patch count.
double patch_selectivity(const SaliencyMap& s, const PatchMask& mask);

/// sum_l S(l) * M(l) over a normalized map; in [0, 1].
double inverse_patch_selectivity(const SaliencyMap& s_normalized, const PatchMask& mask);

/// Little-endian binary32, row-major.
void write_raw_map(const std::filesystem::path& path, const SaliencyMap& s);
SaliencyMap read_raw_map(const std::filesystem::path& path, std::size_t height,
                         std::size_t width);

/// Min-max scaled map, colour-mapped and blended 50/50 over `x` (RGB out).
ImageTensor render_heatmap(const ImageTensor& x, const SaliencyMap& s);

}  // namespace patchlab
