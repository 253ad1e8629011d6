#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/image.hpp"
#include "patchlab/rle.hpp"

namespace patchlab {

class SeededRandomSource;

/// Pre-segmented RGBA occluder.
struct OccluderSprite {
  ImageTensor image;
  std::string category;
  /// "<category>/<file stem>"
  std::string source_id;

  /// Throws ContractError unless the sprite is RGBA with an opaque pixel.
  void validate() const;
};

/// Sprites grouped by category, loaded from `<dir>/<category>/<sprite>.png`.
struct SpriteLibrary {
  std::map<std::string, std::vector<OccluderSprite>> by_category;

  static SpriteLibrary load(const std::filesystem::path& dir);
  const OccluderSprite& find(const std::string& source_id) const;
  bool empty() const noexcept { return by_category.empty(); }
};

struct SmdConfig {
  /// Accepted |achieved - target|.
  double tolerance = 0.01;
  /// Targets at or below this forbid overlapping occluders.
  double overlap_threshold = 0.15;
  /// Sprite's longer side as a fraction of the image's shorter side.
  double scale_min = 0.15;
  double scale_max = 0.35;
  std::size_t max_attempts = 200;
  /// Resampled alpha at or above this counts as occluded.
  float alpha_threshold = 0.5f;
  /// Draw rotations from [0, 360); off yields upright sprites.
  bool rotate = true;

  void validate() const;
};

struct Placement {
  std::string sprite_id;
  double rotation_degrees = 0.0;
  double scale = 0.0;
  double center_x = 0.0;
  double center_y = 0.0;
  std::size_t left = 0;
  std::size_t top = 0;
  /// Occlusion mask of this instance over its own bounding box.
  RleMask mask;
};

struct OcclusionManifest {
  std::string source_image;
  std::size_t height = 0;
  std::size_t width = 0;
  double target_fraction = 0.0;
  double achieved_fraction = 0.0;
  double tolerance = 0.0;
  bool overlap_allowed = false;
  std::string occluder_category;
  std::uint64_t seed = 0;
  std::vector<Placement> placements;
  RleMask union_mask;

  nlohmann::json to_json() const;
  static OcclusionManifest from_json(const nlohmann::json& j);
};

/// A sprite rotated and scaled onto its own tight canvas.
struct RenderedSprite {
  std::size_t height = 0;
  std::size_t width = 0;
  /// Straight (non-premultiplied) RGB and alpha per pixel.
  std::vector<float> rgb;
  std::vector<float> alpha;
  /// alpha >= threshold
  std::vector<std::uint8_t> occluded;
};

/// Rotates by `rotation_degrees` (counter-clockwise) and resizes so the
/// sprite's longer side spans `target_extent` pixels, with bilinear
/// sampling of premultiplied colour.
RenderedSprite render_sprite(const OccluderSprite& sprite, double rotation_degrees,
                             double target_extent, float alpha_threshold);

struct PlacementResult {
  ImageTensor image;
  OcclusionManifest manifest;
};

/// Adds randomly chosen, rotated and scaled instances of `sprites` (one
/// category) until the union occlusion fraction lies within tolerance of
/// `target`. Throws GenerationError with the best fraction reached when
/// max_attempts runs out.
PlacementResult place_occluders(const ImageTensor& x,
                                std::span<const OccluderSprite> sprites, double target,
                                const SmdConfig& cfg, SeededRandomSource& rng);

/// Re-composites a manifest's placements onto `x`. `instance_masks`, when
/// non-null, receives each placement's full-image occlusion bitmap.
ImageTensor replay_manifest(const ImageTensor& x, const SpriteLibrary& library,
                            const OcclusionManifest& manifest, float alpha_threshold,
                            std::vector<std::vector<std::uint8_t>>* instance_masks = nullptr);

struct SmdIndexRecord {
  std::string image_id;
  double target = 0.0;
  bool ok = false;
  std::string output;
  std::string manifest;
  std::string occluder_category;
  double achieved_fraction = 0.0;
  std::string error;

  nlohmann::json to_json() const;
};

/// For every image in `image_dir` and every target: picks an occluder
/// category uniformly, places occluders, writes
/// `<out>/target_<t>/images/<id>.png` and `.../manifests/<id>.json`, and
/// appends a record to `<out>/index.jsonl`. Failures are recorded in the
/// index with ok=false, never dropped.
std::vector<SmdIndexRecord> generate_smd(const std::filesystem::path& image_dir,
                                         const SpriteLibrary& library,
                                         std::span<const double> targets,
                                         std::uint64_t seed,
                                         const std::filesystem::path& out_dir,
                                         const SmdConfig& cfg);

}  // namespace patchlab
