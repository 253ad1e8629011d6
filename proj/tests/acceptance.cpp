// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "patchlab/attacks.hpp"
#include "patchlab/augment.hpp"
#include "patchlab/crise.hpp"
#include "patchlab/error.hpp"
#include "patchlab/grid.hpp"
#include "patchlab/harness.hpp"
#include "patchlab/image_io.hpp"
#include "patchlab/oracle.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/smd.hpp"

#ifndef PATCHLAB_BIN
#error "PATCHLAB_BIN must be defined"
#endif

using namespace patchlab;
namespace fx = patchlab::fixtures;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

ImageTensor random_float_image(std::size_t h, std::size_t w, std::size_t c,
                               SeededRandomSource& rng) {
  std::vector<float> data(h * w * c);
  for (auto& v : data) v = static_cast<float>(rng.uniform01());
  return ImageTensor(h, w, c, std::move(data));
}

Outcome patch_mix_exactness() {
  const auto t0 = Clock::now();
  SeededRandomSource rng(20240601);
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(16);
    const std::size_t cols = 1 + rng.uniform_index(16);
    const std::size_t ph = 1 + rng.uniform_index(8);
    const std::size_t pw = 1 + rng.uniform_index(8);
    const std::size_t channels = std::vector<std::size_t>{1, 3, 4}[rng.uniform_index(3)];
    const double ratio = rng.uniform01();
    const auto grid = make_grid(rows * ph, cols * pw, rows, cols);
    const auto a = random_float_image(rows * ph, cols * pw, channels, rng);
    const auto b = random_float_image(rows * ph, cols * pw, channels, rng);
    const auto mask = sample_patch_mask(grid, ratio, rng);
    const auto n = static_cast<double>(rows * cols);
    const auto expected_count = static_cast<std::size_t>(std::floor(ratio * n + 0.5));
    bool ok = mask.popcount() == expected_count;
    const auto out = patch_mix(a, b, mask);
    for (std::size_t y = 0; ok && y < out.height(); ++y) {
      for (std::size_t x = 0; ok && x < out.width(); ++x) {
        const bool from_donor = mask.test((y / ph) * cols + x / pw);
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const float want = from_donor ? b.at(y, x, ch) : a.at(y, x, ch);
          const float got = out.at(y, x, ch);
          if (std::memcmp(&want, &got, sizeof(float)) != 0) ok = false;
        }
      }
    }
    if (!ok) ++failures;
  }
  const double elapsed = seconds_since(t0);
  return {failures == 0 && elapsed < 30.0,
          format("1000 cases, %zu mismatches, %.2f s (limit 30 s)", failures, elapsed)};
}

Outcome label_mixing() {
  SeededRandomSource rng(7);
  double worst = 0.0, worst_sum = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(1000);
    const double ratio = rng.uniform01();
    const double eps = rng.uniform01() * 0.5;
    std::vector<double> a(k), b(k);
    if (trial % 2 == 0) {
      a[rng.uniform_index(k)] = 1.0;
      b[rng.uniform_index(k)] = 1.0;
    } else {
      double sa = 0.0, sb = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        a[i] = rng.uniform01();
        b[i] = rng.uniform01();
        sa += a[i];
        sb += b[i];
      }
      for (std::size_t i = 0; i < k; ++i) {
        a[i] /= sa;
        b[i] /= sb;
      }
    }
    const auto mixed = mix_labels(CategoryDistribution(a), CategoryDistribution(b), ratio, eps, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double want =
          (1.0 - eps) * ((1.0 - ratio) * a[i] + ratio * b[i]) + eps / static_cast<double>(k);
      worst = std::max(worst, std::abs(mixed[i] - want));
      sum += mixed[i];
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  return {worst <= 1e-12 && worst_sum <= 1e-9,
          format("max componentwise error %.3g (limit 1e-12), max |sum-1| %.3g (limit 1e-9)",
                 worst, worst_sum)};
}

Outcome attack_conservation() {
  SeededRandomSource rng(99);
  std::size_t permute_failures = 0, drop_failures = 0;
  const auto base = fx::random_image(112, 112, 3, 5);
  for (std::size_t g : {2u, 4u, 8u, 14u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto p = patch_permute(base, {g, g}, rng);
      const auto back =
          apply_patch_permutation(p.image, {g, g}, invert_permutation(p.permutation));
      if (!(back == base) || p.permutation.size() != g * g) ++permute_failures;
    }
  }
  for (std::size_t g : {7u, 14u, 16u}) {
    const auto grid = make_grid(112, 112, g, g);
    for (double loss : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
      AttackSpec spec;
      spec.grid = {g, g};
      spec.loss_fraction = loss;
      spec.fill = {0.5f};
      const auto r = patch_drop(base, spec, rng);
      std::size_t changed = 0;
      bool stray = false;
      for (std::size_t patch = 0; patch < grid.n_patches(); ++patch) {
        bool differs = false;
        for (std::size_t y = 0; y < grid.patch_h; ++y) {
          for (std::size_t x = 0; x < grid.patch_w; ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
              const std::size_t row = patch_row0(grid, patch) + y;
              const std::size_t col = patch_col0(grid, patch) + x;
              differs |= r.image.at(row, col, ch) != base.at(row, col, ch);
            }
          }
        }
        if (differs) ++changed;
        if (differs != r.mask.test(patch)) stray = true;
      }
      const auto want = static_cast<std::size_t>(std::floor(loss * g * g + 0.5));
      if (changed != want || r.mask.popcount() != want || stray) ++drop_failures;
    }
  }
  return {permute_failures == 0 && drop_failures == 0,
          format("permute round-trip failures %zu/20, drop count failures %zu/24",
                 permute_failures, drop_failures)};
}

Outcome crise_brute_force() {
  const auto t0 = Clock::now();
  const std::size_t side = 42, cell = 14, cells = 3;
  auto probe = fx::random_probe(side, side, 3, 2, 31, 0.05);
  const auto x = fx::random_image(side, side, 3, 32);
  const std::size_t n_masks = std::size_t{1} << (cells * cells);
  MaskBatch masks(side, side, n_masks);
  for (std::size_t m = 0; m < n_masks; ++m) {
    auto plane = masks.mask(m);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t c = 0; c < side; ++c) {
        const std::size_t bit = (y / cell) * cells + c / cell;
        plane[y * side + c] = ((m >> bit) & 1u) ? 1.0f : 0.0f;
      }
    }
  }
  RiseConfig cfg;
  cfg.keep_prob = 0.5;
  cfg.mode = ScoreMode::kLogit;
  cfg.batch_size = 64;
  const std::size_t category = 1;
  const auto s = crise_map_from_masks(x, probe, category, masks, cfg);

  // Exact expectation for a linear model with independent Bernoulli cells:
  // E[(f - f')(x*B) B(l)] / p = 2 sum_{same cell} w x + 2p sum_{other cells} w x + (b - b').
  const auto w = probe.weights(category);
  std::vector<double> cell_sum(cells * cells, 0.0);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t c = 0; c < side; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const std::size_t i = (y * side + c) * 3 + ch;
        cell_sum[(y / cell) * cells + c / cell] += static_cast<double>(w[i]) * x.data()[i];
      }
    }
  }
  double total = 0.0;
  for (double v : cell_sum) total += v;
  const double bias_gap = probe.bias()[category] - probe.contrast_bias()[category];
  double worst = 0.0;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t c = 0; c < side; ++c) {
      const double own = cell_sum[(y / cell) * cells + c / cell];
      const double want = 2.0 * own + 2.0 * cfg.keep_prob * (total - own) + bias_gap;
      worst = std::max(worst, std::abs(s.at(y, c) - want));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-6 && elapsed < 60.0,
          format("512 masks, max |estimate - expectation| %.3g (limit 1e-6), %.2f s", worst,
                 elapsed)};
}

double mean_pixel_std(const ImageTensor& x, Oracle& oracle, std::size_t n_masks) {
  std::vector<SaliencyMap> maps;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RiseConfig cfg;
    cfg.n_masks = n_masks;
    cfg.cell_stride = 7;
    cfg.seed = 1000 + seed;
    maps.push_back(crise_map(x, oracle, 0, cfg));
  }
  const std::size_t plane = x.pixel_count();
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    double mean = 0.0;
    for (const auto& m : maps) mean += m.values[i];
    mean /= static_cast<double>(maps.size());
    double var = 0.0;
    for (const auto& m : maps) var += (m.values[i] - mean) * (m.values[i] - mean);
    total += std::sqrt(var / static_cast<double>(maps.size() - 1));
  }
  return total / static_cast<double>(plane);
}

Outcome crise_convergence() {
  auto probe = fx::random_probe(28, 28, 3, 3, 41, 0.02);
  const auto x = fx::random_image(28, 28, 3, 42);
  const double coarse = mean_pixel_std(x, probe, 2000);
  const double fine = mean_pixel_std(x, probe, 8000);
  const double ratio = fine / coarse;
  // Ideal 1/sqrt(N) scaling gives 0.5; 25% slack allows up to 0.625.
  return {ratio <= 0.5 * 1.25,
          format("mean per-pixel std %.4g at 2000 masks, %.4g at 8000, ratio %.4f (limit 0.625)",
                 coarse, fine, ratio)};
}

Outcome selectivity_partition() {
  SeededRandomSource rng(123);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(8);
    const std::size_t cols = 1 + rng.uniform_index(8);
    const std::size_t ph = 1 + rng.uniform_index(6);
    const std::size_t pw = 1 + rng.uniform_index(6);
    const auto grid = make_grid(rows * ph, cols * pw, rows, cols);
    SaliencyMap s{rows * ph, cols * pw, std::vector<double>(rows * ph * cols * pw), false};
    const double spread = rng.uniform(0.0, 20.0);
    for (double& v : s.values) v = rng.uniform(-spread, spread);
    const auto norm = softmax_normalize(s);
    const auto mask = sample_patch_mask(grid, rng.uniform01(), rng);
    const double n = static_cast<double>(grid.n_patches());
    const double sum = n * patch_selectivity(norm, mask) + inverse_patch_selectivity(norm, mask);
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return {worst <= 1e-6, format("10000 trials, max |N*P + inverse - 1| %.3g (limit 1e-6)", worst)};
}

Outcome smd_generator() {
  fx::TempDir tmp("accept-smd");
  fx::write_blob_library(tmp / "sprites", {"cat", "dog", "mug"});
  fs::create_directories(tmp / "images");
  for (int i = 0; i < 100; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img%03d.png", i);
    write_png(tmp / "images" / name, fx::random_image(64, 64, 3, 500 + static_cast<std::uint64_t>(i)));
  }
  const auto library = SpriteLibrary::load(tmp / "sprites");
  const std::vector<double> targets{0.10, 0.20, 0.30};
  SmdConfig cfg;
  const auto records = generate_smd(tmp / "images", library, targets, 2024, tmp / "out", cfg);

  std::size_t failed = 0, out_of_tolerance = 0, replay_mismatch = 0, overlapping = 0;
  double worst = 0.0;
  for (const auto& rec : records) {
    if (!rec.ok) {
      ++failed;
      continue;
    }
    const double err = std::abs(rec.achieved_fraction - rec.target);
    worst = std::max(worst, err);
    if (err > 0.01) ++out_of_tolerance;
    const auto manifest =
        OcclusionManifest::from_json(nlohmann::json::parse(fx::read_text(tmp / "out" / rec.manifest)));
    const auto source = read_image(tmp / "images" / manifest.source_image);
    std::vector<std::vector<std::uint8_t>> instances;
    const auto replayed = replay_manifest(source, library, manifest, cfg.alpha_threshold, &instances);
    const auto bytes = encode_png(replayed);
    const auto stored = fx::read_text(tmp / "out" / rec.output);
    if (std::string(bytes.begin(), bytes.end()) != stored) ++replay_mismatch;
    if (rec.target <= cfg.overlap_threshold) {
      std::vector<std::uint8_t> seen(source.pixel_count(), 0);
      bool overlap = false;
      for (const auto& inst : instances) {
        for (std::size_t i = 0; i < inst.size(); ++i) {
          if (inst[i] && seen[i]) overlap = true;
          seen[i] |= inst[i];
        }
      }
      if (overlap) ++overlapping;
    }
  }
  const bool pass = records.size() == 300 && failed == 0 && out_of_tolerance == 0 &&
                    replay_mismatch == 0 && overlapping == 0;
  return {pass, format("%zu records, %zu failed, %zu outside +-0.01 (worst %.4f), %zu replay "
                       "mismatches, %zu low-occlusion images with overlaps",
                       records.size(), failed, out_of_tolerance, worst, replay_mismatch,
                       overlapping)};
}

Outcome eval_determinism() {
  fx::TempDir tmp("accept-eval");
  fs::create_directories(tmp / "images");
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (int i = 0; i < 12; ++i) {
    const std::string id = "im" + std::to_string(i);
    write_png(tmp / "images" / (id + ".png"), fx::random_image(56, 56, 3, 900 + static_cast<std::uint64_t>(i)));
    rows.emplace_back(id, static_cast<std::size_t>(i % 3));
  }
  fx::write_labels(tmp / "labels.csv", rows);
  fx::random_probe(56, 56, 3, 3, 77, 0.01).save(tmp / "a.json");
  fx::random_probe(56, 56, 3, 3, 78, 0.01).save(tmp / "b.json");
  auto run = [&](const std::string& out) {
    std::ostringstream cmd;
    cmd << PATCHLAB_BIN << " eval " << (tmp / "images") << " --labels " << (tmp / "labels.csv")
        << " --oracle builtin:linear:" << (tmp / "a.json").string()
        << " --oracle builtin:linear:" << (tmp / "b.json").string()
        << " --label a --label b --kind mix --levels 0,0.2,0.4,0.6,0.8 --seed 5 --workers 3"
        << " --log-level error --out-dir " << (tmp / out);
    return fx::run_command(cmd.str());
  };
  const int first = run("run1");
  const int second = run("run2");
  std::size_t differing = 0;
  for (const char* name : {"summary.csv", "records.csv", "curves.svg"}) {
    const auto a = fx::read_text(tmp / "run1" / name);
    if (a.empty() || a != fx::read_text(tmp / "run2" / name)) ++differing;
  }
  return {first == 0 && second == 0 && differing == 0,
          format("exit codes %d/%d, %zu of 3 outputs differ", first, second, differing)};
}

// Patch-sensitive model: class 1 iff mean intensity exceeds 0.2. Dropping
// patches to black lowers the mean, and the image means are spread so that
// each drop level flips at least one more image.
Outcome constructed_drop_sweep(std::string& detail) {
  fx::TempDir tmp("accept-drop");
  fs::create_directories(tmp / "images");
  std::vector<std::pair<std::string, std::size_t>> rows;
  const int bright_levels[] = {54, 60, 69, 79, 94, 115, 148, 217};
  for (int level : bright_levels) {
    const std::string id = "bright" + std::to_string(level);
    write_png(tmp / "images" / (id + ".png"), fx::textured_image(56, 56, 3, level, 0));
    rows.emplace_back(id, 1);
  }
  for (int level : {10, 25, 40}) {
    const std::string id = "dark" + std::to_string(level);
    write_png(tmp / "images" / (id + ".png"), fx::textured_image(56, 56, 3, level, 0));
    rows.emplace_back(id, 0);
  }
  fx::write_labels(tmp / "labels.csv", rows);
  auto probe = fx::mean_threshold_probe(56, 56, 3, 0.2);
  SweepConfig cfg;
  cfg.kind = AttackKind::kPatchDrop;
  cfg.grid = {7, 7};
  cfg.levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  cfg.fill = {0.0f};
  cfg.seed = 17;
  const auto r = run_attack_sweep(tmp / "images", tmp / "labels.csv", probe, cfg);
  bool decreasing = r.summary.levels.size() == cfg.levels.size();
  std::ostringstream os;
  os << "drop accuracy";
  for (std::size_t i = 0; i < r.summary.levels.size(); ++i) {
    os << ' ' << format("%.3f", r.summary.levels[i].top1_acc);
    if (i > 0 && !(r.summary.levels[i].top1_acc < r.summary.levels[i - 1].top1_acc)) {
      decreasing = false;
    }
  }
  detail = os.str();
  return {decreasing, detail};
}

// Patch-robust model: class 0 weighs only the patches that stay in context
// after the attack, so its saliency should avoid the replaced patches.
Outcome constructed_selectivity(std::string& detail) {
  fx::TempDir tmp("accept-sel");
  fs::create_directories(tmp / "images");
  fs::create_directories(tmp / "donors");
  const auto image = fx::random_image(56, 56, 3, 61);
  const auto donor = fx::random_image(56, 56, 3, 62);
  write_png(tmp / "images" / "probe.png", image);
  write_png(tmp / "donors" / "donor.png", donor);
  fx::write_labels(tmp / "labels.csv", {{"probe", 0}, {"donor", 1}});
  const GridSpec grid_spec{7, 7};
  const std::uint64_t seed = 8;

  bool all_below = true;
  std::ostringstream os;
  os << "inverse selectivity vs baseline:";
  for (double level : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
    // Reproduce the attack's mask from the same seed stream.
    SeededRandomSource rng = SeededRandomSource(seed).derive("probe");
    AttackSpec spec;
    spec.kind = AttackKind::kPatchMix;
    spec.grid = grid_spec;
    spec.loss_fraction = level;
    const PatchMask mask = patch_mix_attack(image, donor, spec, rng).mask;

    const ImageTensor field = mask_to_pixel_field(mask);
    std::vector<float> in_context(56 * 56 * 3);
    for (std::size_t p = 0; p < field.pixel_count(); ++p) {
      const float weight = field.data()[p] > 0.5f ? 0.0f : 1.0f;
      for (std::size_t ch = 0; ch < 3; ++ch) in_context[p * 3 + ch] = weight;
    }
    LinearProbeClassifier robust(56, 56, 3, {in_context, std::vector<float>(56 * 56 * 3, 0.0f)},
                                 {0.0, 0.0});
    SelectivityConfig cfg;
    cfg.grid = grid_spec;
    cfg.level = level;
    cfg.seed = seed;
    cfg.per_class_cap = 1;
    cfg.donor_dir = tmp / "donors";
    cfg.crise.n_masks = 2000;
    cfg.crise.cell_stride = 8;
    cfg.crise.mode = ScoreMode::kLogit;
    const auto r = run_selectivity_eval(tmp / "images", tmp / "labels.csv", robust, cfg);
    if (r.records.size() != 1 || !r.records[0].ok) {
      all_below = false;
      os << format(" %.1f:error", level);
      continue;
    }
    const auto& rec = r.records[0];
    const bool same_mask = std::abs(rec.uniform_baseline - mask.fraction()) < 1e-12;
    const bool below = same_mask && rec.inverse_selectivity < rec.uniform_baseline;
    all_below = all_below && below;
    os << format(" %.1f:%.4f<%.4f", level, rec.inverse_selectivity, rec.uniform_baseline);
  }
  detail = os.str();
  return {all_below, detail};
}

Outcome constructed_oracles() {
  std::string drop_detail, sel_detail;
  const Outcome drop = constructed_drop_sweep(drop_detail);
  const Outcome sel = constructed_selectivity(sel_detail);
  return {drop.pass && sel.pass, drop_detail + "; " + sel_detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"patch mixing exactness", patch_mix_exactness},
      {"label mixing closed form", label_mixing},
      {"attack conservation", attack_conservation},
      {"c-RISE brute-force equivalence", crise_brute_force},
      {"c-RISE convergence", crise_convergence},
      {"selectivity partition", selectivity_partition},
      {"SMD generator", smd_generator},
      {"eval determinism", eval_determinism},
      {"constructed-oracle sanity", constructed_oracles},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
