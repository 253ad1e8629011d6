#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchlab/attacks.hpp"
#include "patchlab/crise.hpp"
#include "patchlab/grid.hpp"
#include "patchlab/oracle.hpp"

namespace patchlab {

/// `image_id,category_index` rows; a non-numeric first row is a header.
std::map<std::string, std::size_t> read_label_file(const std::filesystem::path& path);

struct DatasetItem {
  std::string id;  // file stem
  std::filesystem::path path;
  std::size_t label = 0;
};

struct Dataset {
  std::vector<DatasetItem> items;
  /// Images present in the folder without a label.
  std::vector<std::string> unlabeled;

  static Dataset load(const std::filesystem::path& dir,
                      const std::map<std::string, std::size_t>& labels);
};

/// Category indices by descending score, ties broken by ascending index.
std::vector<std::size_t> rank_categories(const std::vector<double>& scores, std::size_t n);

struct EvalRecord {
  /// Sweep label of the oracle that produced the record.
  std::string oracle;
  std::string image_id;
  std::size_t ground_truth = 0;
  std::string attack;
  double level = 0.0;
  std::size_t top1 = 0;
  std::vector<std::size_t> top5;
  bool correct1 = false;
  bool correct5 = false;
};

struct LevelSummary {
  double level = 0.0;
  std::size_t n = 0;
  double top1_acc = 0.0;
  double top5_acc = 0.0;
  std::size_t errors = 0;
};

struct SweepSummary {
  std::string label;
  std::vector<LevelSummary> levels;
};

struct SweepConfig {
  AttackKind kind = AttackKind::kPatchDrop;
  GridSpec grid{7, 7};
  /// Information-loss levels for drop/mix.
  std::vector<double> levels{0.0};
  /// Shuffle grids for permute; each is one level (x = patch count).
  std::vector<GridSpec> permute_grids;
  std::vector<float> fill{0.0f};
  std::uint64_t seed = 0;
  /// Donor pool for mix attacks; defaults to the evaluated folder.
  std::optional<std::filesystem::path> donor_dir;
  /// Crop images to the largest grid-divisible centre region.
  bool center_crop = false;
  std::size_t workers = 1;
};

struct SweepResult {
  SweepSummary summary;
  std::vector<EvalRecord> records;
};

/// Attacks every labeled image at every level with a per-(image, level)
/// seed derived from (seed, image id, level index), scores the results, and
/// aggregates top-1/top-5 accuracy per level.
SweepResult run_attack_sweep(const std::filesystem::path& dataset_dir,
                             const std::filesystem::path& label_file, Oracle& oracle,
                             const SweepConfig& cfg, std::string label = "oracle");

/// Recount from records; used to cross-check aggregation.
std::vector<LevelSummary> summarize_records(const std::vector<EvalRecord>& records,
                                            std::size_t errors_per_level);

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SweepSummary>& summaries);
void write_records_csv(const std::filesystem::path& path,
                       const std::vector<EvalRecord>& records);

struct SelectivityConfig {
  GridSpec grid{7, 7};
  double level = 0.3;
  RiseConfig crise;
  std::size_t per_class_cap = 5;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> donor_dir;
  bool center_crop = false;
};

struct SelectivityRecord {
  std::string image_id;
  std::size_t ground_truth = 0;
  std::size_t predicted = 0;
  double inverse_selectivity = 0.0;
  /// Out-of-context pixel fraction: the value a uniform map would give.
  double uniform_baseline = 0.0;
  bool ok = false;
  std::string error;
};

struct SelectivityResult {
  std::vector<SelectivityRecord> records;
  /// class -> (n, mean inverse selectivity)
  std::map<std::size_t, std::pair<std::size_t, double>> per_class;
  double mean = 0.0;
  std::size_t evaluated = 0;
};

/// Patch-mix attack, c-RISE map for the attacked image's top-1 class,
/// Softmax normalization, and inverse patch selectivity against the attack
/// mask, for up to per_class_cap images per class.
SelectivityResult run_selectivity_eval(const std::filesystem::path& dataset_dir,
                                       const std::filesystem::path& label_file,
                                       Oracle& oracle, const SelectivityConfig& cfg);

void write_per_class_csv(const std::filesystem::path& path, const SelectivityResult& r);
void write_selectivity_records_csv(const std::filesystem::path& path,
                                   const SelectivityResult& r);

/// Accuracy-vs-information-loss line chart, one series per summary.
std::string render_accuracy_svg(const std::vector<SweepSummary>& summaries);

}  // namespace patchlab
