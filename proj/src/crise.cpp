#include "patchlab/crise.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "patchlab/error.hpp"
#include "patchlab/image_io.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/simd.hpp"

namespace patchlab {
namespace {

std::size_t cells_for(std::size_t extent, std::size_t stride) {
  return (extent + stride - 1) / stride;
}

}  // namespace

std::string_view score_mode_name(ScoreMode mode) {
  return mode == ScoreMode::kProbability ? "probability" : "logit";
}

ScoreMode parse_score_mode(std::string_view text) {
  if (text == "probability") return ScoreMode::kProbability;
  if (text == "logit") return ScoreMode::kLogit;
  throw ContractError("unknown score mode '" + std::string(text) +
                      "' (expected probability or logit)");
}

void RiseConfig::validate(std::size_t img_h, std::size_t img_w) const {
  if (n_masks == 0) throw ContractError("RISE: n_masks must be >= 1");
  if (!(keep_prob > 0.0 && keep_prob < 1.0)) {
    throw ContractError("RISE: keep probability must lie in (0, 1)");
  }
  if (cell_stride == 0 || img_h / cell_stride < 2 || img_w / cell_stride < 2) {
    throw ContractError("RISE: stride " + std::to_string(cell_stride) +
                        " leaves fewer than 2 cells per axis on a " +
                        std::to_string(img_h) + "x" + std::to_string(img_w) + " image");
  }
  if (batch_size == 0) throw ContractError("RISE: batch size must be >= 1");
}

void sample_rise_mask(const RiseConfig& cfg, std::size_t img_h, std::size_t img_w,
                      std::size_t index, std::span<float> out) {
  const std::size_t s = cfg.cell_stride;
  const std::size_t gh = cells_for(img_h, s) + 1;
  const std::size_t gw = cells_for(img_w, s) + 1;
  SeededRandomSource rng = SeededRandomSource(cfg.seed).derive(std::uint64_t{index});
  std::vector<float> grid(gh * gw);
  for (float& g : grid) g = rng.bernoulli(cfg.keep_prob) ? 1.0f : 0.0f;
  const std::size_t dy = rng.uniform_index(s);
  const std::size_t dx = rng.uniform_index(s);

  // Bilinear upsampling with pixel-centre alignment, edges clamped.
  const auto sample_axis = [&](std::size_t u, std::size_t cells, std::size_t& i0,
                               std::size_t& i1, float& frac) {
    double g = (static_cast<double>(u) + 0.5) / static_cast<double>(s) - 0.5;
    g = std::clamp(g, 0.0, static_cast<double>(cells - 1));
    i0 = static_cast<std::size_t>(g);
    i1 = std::min(i0 + 1, cells - 1);
    frac = static_cast<float>(g - static_cast<double>(i0));
  };
  std::vector<std::size_t> c0(img_w), c1(img_w);
  std::vector<float> cf(img_w);
  for (std::size_t c = 0; c < img_w; ++c) sample_axis(c + dx, gw, c0[c], c1[c], cf[c]);
  for (std::size_t r = 0; r < img_h; ++r) {
    std::size_t r0 = 0, r1 = 0;
    float rf = 0.0f;
    sample_axis(r + dy, gh, r0, r1, rf);
    const float* top = &grid[r0 * gw];
    const float* bot = &grid[r1 * gw];
    float* row = out.data() + r * img_w;
    for (std::size_t c = 0; c < img_w; ++c) {
      const float t = top[c0[c]] + cf[c] * (top[c1[c]] - top[c0[c]]);
      const float b = bot[c0[c]] + cf[c] * (bot[c1[c]] - bot[c0[c]]);
      row[c] = std::clamp(t + rf * (b - t), 0.0f, 1.0f);
    }
  }
}

MaskBatch generate_rise_masks(const RiseConfig& cfg, std::size_t img_h,
                              std::size_t img_w) {
  cfg.validate(img_h, img_w);
  MaskBatch masks(img_h, img_w, cfg.n_masks);
  for (std::size_t i = 0; i < cfg.n_masks; ++i) {
    sample_rise_mask(cfg, img_h, img_w, i, masks.mask(i));
  }
  return masks;
}

std::size_t SaliencyMap::argmax() const {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

double mode_score(const OracleScores& scores, std::size_t category, ScoreMode mode) {
  if (mode == ScoreMode::kLogit) {
    if (scores.kind != ScoreKind::kLogit) {
      throw ContractError("logit mode needs an oracle that reports logits");
    }
    return scores.scores.at(category);
  }
  if (scores.kind == ScoreKind::kProbability) return scores.scores.at(category);
  return softmax(scores.scores).at(category);
}

namespace {

// Shared accumulation loop; `fill_mask(i, out)` writes mask i.
template <class FillMask>
SaliencyMap estimate(const ImageTensor& x, Oracle& oracle, std::size_t category,
                     std::size_t n_masks, const RiseConfig& cfg, FillMask fill_mask) {
  if (category >= oracle.num_categories()) {
    throw ContractError("category " + std::to_string(category) + " >= k=" +
                        std::to_string(oracle.num_categories()));
  }
  if (!oracle.supports_contrast()) {
    throw ContractError("c-RISE needs a contrastive oracle; " + oracle.describe() +
                        " has none");
  }
  if (!(cfg.keep_prob > 0.0 && cfg.keep_prob < 1.0)) {
    throw ContractError("RISE: keep probability must lie in (0, 1)");
  }
  const auto& k = simd::kernels();
  const std::size_t plane = x.pixel_count();
  const std::size_t batch_size = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<double> acc(plane, 0.0);
  std::vector<float> masks(batch_size * plane);
  std::vector<ImageTensor> batch;

  for (std::size_t start = 0; start < n_masks; start += batch_size) {
    const std::size_t count = std::min(batch_size, n_masks - start);
    batch.resize(count);
    for (std::size_t j = 0; j < count; ++j) {
      std::span<float> m(masks.data() + j * plane, plane);
      fill_mask(start + j, m);
      if (!batch[j].same_shape(x)) batch[j] = ImageTensor(x.height(), x.width(), x.channels());
      k.scale_pixels(x.data().data(), m.data(), batch[j].mutable_data().data(), plane,
                     x.channels());
    }
    std::vector<ScoredImage> scored;
    try {
      scored = oracle.evaluate(batch, true);
    } catch (const TransportError& e) {
      throw TransportError(std::string(e.what()) + " (c-RISE aborted after " +
                               std::to_string(start) + " of " + std::to_string(n_masks) +
                               " masks)",
                           e.batch_index());
    }
    if (scored.size() != count) throw ProtocolError("oracle returned wrong batch size");
    // Ordered accumulation keeps results bit-stable for a fixed seed.
    for (std::size_t j = 0; j < count; ++j) {
      const double weight = mode_score(scored[j].base, category, cfg.mode) -
                            mode_score(scored[j].contrast.value(), category, cfg.mode);
      k.axpy(acc.data(), masks.data() + j * plane, weight, plane);
    }
    if (cfg.progress) cfg.progress(start + count, n_masks);
  }

  SaliencyMap s{x.height(), x.width(), std::move(acc), false};
  const double norm = 1.0 / (cfg.keep_prob * static_cast<double>(n_masks));
  for (double& v : s.values) v *= norm;
  return s;
}

}  // namespace

SaliencyMap crise_map(const ImageTensor& x, Oracle& oracle, std::size_t category,
                      const RiseConfig& cfg) {
  cfg.validate(x.height(), x.width());
  return estimate(x, oracle, category, cfg.n_masks, cfg,
                  [&](std::size_t i, std::span<float> out) {
                    sample_rise_mask(cfg, x.height(), x.width(), i, out);
                  });
}

SaliencyMap crise_map_from_masks(const ImageTensor& x, Oracle& oracle,
                                 std::size_t category, const MaskBatch& masks,
                                 const RiseConfig& cfg) {
  if (masks.height() != x.height() || masks.width() != x.width()) {
    throw ShapeError("c-RISE: mask planes do not match the image");
  }
  if (masks.count() == 0) throw ContractError("c-RISE: no masks");
  return estimate(x, oracle, category, masks.count(), cfg,
                  [&](std::size_t i, std::span<float> out) {
                    const auto src = masks.mask(i);
                    std::copy(src.begin(), src.end(), out.begin());
                  });
}

SaliencyMap softmax_normalize(const SaliencyMap& s) {
  if (s.normalized) throw ContractError("softmax_normalize: map is already normalized");
  SaliencyMap out{s.height, s.width, softmax(s.values), true};
  return out;
}

namespace {

void require_map_matches(const SaliencyMap& s, const PatchMask& mask, const char* what) {
  const PatchGrid& g = mask.grid();
  if (g.image_height() != s.height || g.image_width() != s.width ||
      s.values.size() != s.height * s.width) {
    throw ShapeError(std::string(what) + ": mask grid covers " +
                     std::to_string(g.image_height()) + "x" +
                     std::to_string(g.image_width()) + ", map is " +
                     std::to_string(s.height) + "x" + std::to_string(s.width));
  }
}

}  // namespace

double patch_selectivity(const SaliencyMap& s, const PatchMask& mask) {
  require_map_matches(s, mask, "patch_selectivity");
  const ImageTensor field = mask_to_pixel_field(mask);
  const auto& k = simd::kernels();
  std::vector<float> keep(field.size());
  const auto f = field.data();
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = 1.0f - f[i];
  return k.dot_f64_f32(s.values.data(), keep.data(), keep.size()) /
         static_cast<double>(mask.grid().n_patches());
}

double inverse_patch_selectivity(const SaliencyMap& s_normalized, const PatchMask& mask) {
  if (!s_normalized.normalized) {
    throw ContractError("inverse_patch_selectivity needs a Softmax-normalized map");
  }
  require_map_matches(s_normalized, mask, "inverse_patch_selectivity");
  const ImageTensor field = mask_to_pixel_field(mask);
  return simd::kernels().dot_f64_f32(s_normalized.values.data(), field.data().data(),
                                     field.size());
}

void write_raw_map(const std::filesystem::path& path, const SaliencyMap& s) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(s.values.size() * 4);
  for (double v : s.values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int sh = 0; sh < 32; sh += 8) bytes.push_back(static_cast<std::uint8_t>(bits >> sh));
  }
  write_file(path, bytes);
}

SaliencyMap read_raw_map(const std::filesystem::path& path, std::size_t height,
                         std::size_t width) {
  const auto bytes = read_file(path);
  if (bytes.size() != height * width * 4) {
    throw IoError("raw map " + path.string() + " has " + std::to_string(bytes.size()) +
                  " bytes, expected " + std::to_string(height * width * 4));
  }
  SaliencyMap s{height, width, std::vector<double>(height * width), false};
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | bytes[i * 4 + static_cast<std::size_t>(b)];
    s.values[i] = std::bit_cast<float>(bits);
  }
  return s;
}

ImageTensor render_heatmap(const ImageTensor& x, const SaliencyMap& s) {
  if (x.height() != s.height || x.width() != s.width) {
    throw ShapeError("render_heatmap: map and image differ in size");
  }
  const auto [lo_it, hi_it] = std::minmax_element(s.values.begin(), s.values.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  ImageTensor out(x.height(), x.width(), 3);
  auto dst = out.mutable_data();
  const auto src = x.data();
  const std::size_t c = x.channels();
  for (std::size_t p = 0; p < x.pixel_count(); ++p) {
    const double t = span > 0.0 ? (s.values[p] - lo) / span : 0.0;
    // Piecewise-linear "jet": blue -> cyan -> yellow -> red.
    const double rgb[3] = {std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0),
                           std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0),
                           std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0)};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double base = c >= 3 ? src[p * c + ch] : src[p * c];
      dst[p * 3 + ch] = static_cast<float>(0.5 * base + 0.5 * rgb[ch]);
    }
  }
  return out;
}

}  // namespace patchlab
