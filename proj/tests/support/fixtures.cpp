#include "fixtures.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "patchlab/image_io.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::fixtures {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  std::string pattern = (fs::temp_directory_path() / ("patchlab-" + tag + "-XXXXXX")).string();
  if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

ImageTensor random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  SeededRandomSource rng(seed);
  std::vector<float> data(h * w * c);
  for (auto& v : data) v = static_cast<float>(rng.uniform_index(256)) / 255.0f;
  return ImageTensor(h, w, c, std::move(data));
}

ImageTensor textured_image(std::size_t h, std::size_t w, std::size_t c, int level, int delta) {
  std::vector<float> data(h * w * c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const int v = std::clamp(level + (((x + y) % 2) ? delta : -delta), 0, 255);
      for (std::size_t ch = 0; ch < c; ++ch) {
        data[(y * w + x) * c + ch] = static_cast<float>(v) / 255.0f;
      }
    }
  }
  return ImageTensor(h, w, c, std::move(data));
}

LinearProbeClassifier mean_threshold_probe(std::size_t h, std::size_t w, std::size_t c,
                                           double threshold) {
  const std::size_t n = h * w * c;
  std::vector<std::vector<float>> weights{std::vector<float>(n, 0.0f),
                                          std::vector<float>(n, 1.0f / static_cast<float>(n))};
  return LinearProbeClassifier(h, w, c, std::move(weights), {0.0, -threshold}, std::nullopt,
                               ScoreKind::kLogit);
}

LinearProbeClassifier random_probe(std::size_t h, std::size_t w, std::size_t c, std::size_t k,
                                   std::uint64_t seed, double scale, ScoreKind kind) {
  SeededRandomSource rng(seed);
  std::vector<std::vector<float>> weights(k, std::vector<float>(h * w * c));
  std::vector<double> bias(k);
  for (std::size_t cat = 0; cat < k; ++cat) {
    for (auto& v : weights[cat]) v = static_cast<float>(rng.uniform(-scale, scale));
    bias[cat] = rng.uniform(-1.0, 1.0);
  }
  return LinearProbeClassifier(h, w, c, std::move(weights), std::move(bias), std::nullopt, kind);
}

OccluderSprite blob_sprite(const std::string& category, const std::string& name,
                           std::size_t h, std::size_t w, std::uint64_t seed) {
  SeededRandomSource rng(seed);
  const float r = static_cast<float>(rng.uniform_index(256)) / 255.0f;
  const float g = static_cast<float>(rng.uniform_index(256)) / 255.0f;
  const float b = static_cast<float>(rng.uniform_index(256)) / 255.0f;
  std::vector<float> data(h * w * 4, 0.0f);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = (static_cast<double>(y) - cy) / (static_cast<double>(h) / 2.0);
      const double dx = (static_cast<double>(x) - cx) / (static_cast<double>(w) / 2.0);
      const double d = std::sqrt(dx * dx + dy * dy);
      // Soft rim of about one pixel, quantized to 8 bits.
      const double edge = std::clamp((1.0 - d) * static_cast<double>(std::min(h, w)) / 2.0,
                                     0.0, 1.0);
      const float a = std::floor(static_cast<float>(edge) * 255.0f + 0.5f) / 255.0f;
      if (a <= 0.0f) continue;
      float* px = &data[(y * w + x) * 4];
      px[0] = r;
      px[1] = g;
      px[2] = b;
      px[3] = a;
    }
  }
  return {ImageTensor(h, w, 4, std::move(data)), category, category + "/" + name};
}

void write_blob_library(const fs::path& dir, const std::vector<std::string>& categories) {
  std::uint64_t seed = 1;
  for (const auto& cat : categories) {
    fs::create_directories(dir / cat);
    const std::size_t shapes[][2] = {{24, 24}, {16, 32}, {30, 20}};
    for (std::size_t i = 0; i < 3; ++i) {
      const auto sprite =
          blob_sprite(cat, "blob" + std::to_string(i), shapes[i][0], shapes[i][1], seed++);
      write_png(dir / cat / ("blob" + std::to_string(i) + ".png"), sprite.image);
    }
  }
}

void write_labels(const fs::path& path,
                  const std::vector<std::pair<std::string, std::size_t>>& rows) {
  std::ofstream out(path);
  out << "image_id,category_index\n";
  for (const auto& [id, label] : rows) out << id << ',' << label << '\n';
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

}  // namespace patchlab::fixtures
