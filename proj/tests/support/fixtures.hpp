#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "patchlab/image.hpp"
#include "patchlab/oracle.hpp"
#include "patchlab/smd.hpp"

namespace patchlab::fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Samples are multiples of 1/255, so PNG round trips are exact.
ImageTensor random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed);

/// Constant 8-bit level plus a +-delta checkerboard (in 1/255 steps).
ImageTensor textured_image(std::size_t h, std::size_t w, std::size_t c, int level, int delta);

/// Logit oracle with k=2: class 1 scores mean(x) - threshold, class 0 scores 0.
LinearProbeClassifier mean_threshold_probe(std::size_t h, std::size_t w, std::size_t c,
                                           double threshold);

/// Random weights in [-scale, scale] and bias.
LinearProbeClassifier random_probe(std::size_t h, std::size_t w, std::size_t c, std::size_t k,
                                   std::uint64_t seed, double scale = 1.0,
                                   ScoreKind kind = ScoreKind::kLogit);

/// RGBA ellipse with a soft one-pixel rim; colour from the seed.
OccluderSprite blob_sprite(const std::string& category, const std::string& name,
                           std::size_t h, std::size_t w, std::uint64_t seed);

/// Writes `<dir>/<category>/<name>.png` for a few blob shapes per category.
void write_blob_library(const std::filesystem::path& dir,
                        const std::vector<std::string>& categories);

void write_labels(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, std::size_t>>& rows);

std::string read_text(const std::filesystem::path& path);

/// Runs a shell command and returns its exit status.
int run_command(const std::string& command);

}  // namespace patchlab::fixtures
