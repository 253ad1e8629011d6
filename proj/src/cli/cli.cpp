#include "patchlab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

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

namespace patchlab::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- value parsing; failures are usage errors naming the flag ----

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& flag, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError("--" + flag + ": '" + text + "' is not a number");
  }
}

std::vector<double> double_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(to_double(flag, part));
  return out;
}

std::vector<float> fill_values(const std::string& flag, const std::string& text) {
  std::vector<float> out;
  for (double v : double_list(flag, text)) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("--" + flag + ": values must lie in [0, 1]");
    out.push_back(static_cast<float>(v));
  }
  return out;
}

template <class Fn>
auto as_usage(const std::string& flag, Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw UsageError("--" + flag + ": " + e.what());
  }
}

GridSpec grid_value(const std::string& flag, const std::string& text) {
  return as_usage(flag, [&] { return GridSpec::parse(text); });
}

std::vector<GridSpec> grid_list(const std::string& flag, const std::string& text) {
  std::vector<GridSpec> out;
  for (const auto& part : split(text, ',')) out.push_back(grid_value(flag, part));
  return out;
}

ImageTensor load(const fs::path& path, std::optional<GridSpec> crop) {
  ImageTensor img = read_image(path);
  return crop ? center_crop_to_grid(img, *crop) : img;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---- subcommand arguments ----

struct CommonArgs {
  std::string config;
  std::string log_level = "info";
  std::string out_dir;
};

struct MixArgs {
  std::string image_a, image_b;
  std::string grid = "7x7";
  std::string ratio;
  std::string beta = "0.3,0.3";
  double eps = 0.1;
  std::string method = "patch";
  std::size_t categories = 0;
  std::size_t label_a = 0;
  std::size_t label_b = 1;
  std::uint64_t seed = 0;
  bool center_crop = false;
};

struct AttackArgs {
  std::string in_dir;
  std::string kind = "drop";
  std::string grid = "7x7";
  double loss = 0.3;
  std::string fill = "0";
  std::string donor_dir;
  bool per_patch_donors = false;
  std::uint64_t seed = 0;
  bool center_crop = false;
};

struct SmdArgs {
  std::string in_dir;
  std::string sprites;
  std::string targets = "0.1,0.2,0.3";
  double tolerance = 0.01;
  double overlap_threshold = 0.15;
  double scale_min = 0.15;
  double scale_max = 0.35;
  std::size_t max_attempts = 200;
  double alpha_threshold = 0.5;
  bool upright = false;
  std::uint64_t seed = 0;
};

struct RiseArgs {
  std::size_t n_masks = 14000;
  std::size_t stride = 14;
  double keep_prob = 0.5;
  std::size_t batch_size = 64;
  std::string mode = "probability";
};

struct CriseArgs {
  std::string image;
  std::string oracle;
  long long category = -1;
  RiseArgs rise;
  std::uint64_t seed = 0;
  std::string out = "heatmap.png";
  std::string out_raw;
};

struct SelectivityArgs {
  std::string dataset_dir;
  std::string labels;
  std::string oracle;
  std::string grid = "7x7";
  double level = 0.3;
  RiseArgs rise;
  std::size_t per_class_cap = 5;
  std::string donor_dir;
  std::uint64_t seed = 0;
  bool center_crop = false;
};

struct EvalArgs {
  std::string dataset_dir;
  std::string labels;
  std::vector<std::string> oracles;
  std::vector<std::string> oracle_labels;
  std::string kind = "drop";
  std::string grid = "7x7";
  std::string levels = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8";
  std::string shuffle_grids = "2x2,4x4,8x8,14x14";
  std::string fill = "0";
  std::string donor_dir;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool center_crop = false;
  bool no_plot = false;
};

RiseConfig rise_config(const RiseArgs& a, std::uint64_t seed) {
  RiseConfig cfg;
  cfg.n_masks = a.n_masks;
  cfg.cell_stride = a.stride;
  cfg.keep_prob = a.keep_prob;
  cfg.batch_size = a.batch_size;
  cfg.seed = seed;
  cfg.mode = as_usage("mode", [&] { return parse_score_mode(a.mode); });
  if (cfg.batch_size == 0) throw UsageError("--batch-size must be positive");
  return cfg;
}

void add_rise_options(CLI::App* app, RiseArgs& a) {
  app->add_option("--n-masks", a.n_masks, "Number of random masks")->capture_default_str();
  app->add_option("--stride", a.stride, "Mask cell size in pixels")->capture_default_str();
  app->add_option("--keep-prob", a.keep_prob, "Probability a mask cell is kept")
      ->capture_default_str();
  app->add_option("--batch-size", a.batch_size, "Masked images per oracle request")
      ->capture_default_str();
  app->add_option("--mode", a.mode, "Mask weight: probability or logit")->capture_default_str();
}

std::function<void(std::size_t, std::size_t)> progress_logger(std::string what) {
  return [what = std::move(what)](std::size_t done, std::size_t total) {
    log(LogLevel::kDebug, "crise_progress", {{"item", what}, {"done", done}, {"total", total}});
  };
}

// ---- subcommand bodies ----

int run_mix(const MixArgs& a, const fs::path& out_dir) {
  AugmentPolicy policy;
  policy.grid = grid_value("grid", a.grid);
  policy.smoothing_eps = a.eps;
  if (!a.ratio.empty()) {
    policy.fixed_ratio = to_double("ratio", a.ratio);
  } else {
    const auto ab = double_list("beta", a.beta);
    if (ab.size() != 2) throw UsageError("--beta expects two values a,b");
    policy.beta_alpha = ab[0];
    policy.beta_beta = ab[1];
  }
  if (a.method == "patch") {
    policy.method_weights = {0.0, 0.0, 1.0};
  } else if (a.method == "mixup") {
    policy.method_weights = {1.0, 0.0, 0.0};
  } else if (a.method == "cutmix") {
    policy.method_weights = {0.0, 1.0, 0.0};
  } else if (a.method != "random") {
    throw UsageError("--method must be patch, mixup, cutmix or random");
  }
  as_usage("ratio", [&] { policy.validate(); return 0; });
  const std::size_t k = a.categories > 0 ? a.categories : 2;
  if (a.label_a >= k || a.label_b >= k) throw UsageError("--label-a/--label-b exceed --categories");

  const std::optional<GridSpec> crop =
      a.center_crop ? std::optional<GridSpec>(policy.grid) : std::nullopt;
  const ImageTensor x_a = load(a.image_a, crop);
  const ImageTensor x_b = load(a.image_b, crop);
  SeededRandomSource rng(a.seed);
  const AugmentResult res =
      augment_pair(x_a, CategoryDistribution::one_hot(k, a.label_a), x_b,
                   CategoryDistribution::one_hot(k, a.label_b), policy, rng);

  const std::string stem =
      fs::path(a.image_a).stem().string() + "__" + fs::path(a.image_b).stem().string();
  write_png(out_dir / (stem + ".png"), res.image);
  json side = {{"source_a", a.image_a},
               {"source_b", a.image_b},
               {"method", method_name(res.method)},
               {"r", res.label_ratio},
               {"drawn", res.drawn},
               {"grid", policy.grid.str()},
               {"seed", a.seed},
               {"rng", std::string(SeededRandomSource::kAlgorithm)},
               {"mask", res.mask ? json(res.mask->to_text()) : json(nullptr)},
               {"box", res.box ? json{{"top", res.box->top},
                                      {"left", res.box->left},
                                      {"bottom", res.box->bottom},
                                      {"right", res.box->right}}
                               : json(nullptr)}};
  if (a.categories > 0) {
    side["label"] = std::vector<double>(res.label.probs().begin(), res.label.probs().end());
  }
  write_text(out_dir / (stem + ".json"), side.dump(2) + "\n");
  log(LogLevel::kInfo, "mix_done",
      {{"output", (out_dir / (stem + ".png")).string()},
       {"method", method_name(res.method)},
       {"r", res.label_ratio}});
  return kExitOk;
}

int run_attack(const AttackArgs& a, const fs::path& out_dir) {
  AttackSpec base;
  base.kind = as_usage("kind", [&] { return parse_attack_kind(a.kind); });
  base.grid = grid_value("grid", a.grid);
  base.loss_fraction = a.loss;
  base.fill = fill_values("fill", a.fill);
  if (base.kind != AttackKind::kPatchPermute) {
    as_usage("loss", [&] { base.validate(); return 0; });
  }
  const std::optional<GridSpec> crop =
      a.center_crop ? std::optional<GridSpec>(base.grid) : std::nullopt;

  const auto images = list_images(a.in_dir);
  if (images.empty()) log(LogLevel::kWarn, "no_images", {{"dir", a.in_dir}});
  std::vector<fs::path> donors;
  if (base.kind == AttackKind::kPatchMix) {
    donors = list_images(a.donor_dir.empty() ? a.in_dir : a.donor_dir);
    if (donors.empty()) throw ContractError("mix attack needs at least one donor image");
  }
  const SeededRandomSource root(a.seed);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string id = images[i].stem().string();
    try {
      const ImageTensor x = load(images[i], crop);
      SeededRandomSource rng = root.derive(id);
      AttackSpec spec = base;
      spec.seed = rng.seed();
      json side = {{"source", images[i].string()},
                   {"kind", attack_name(spec.kind)},
                   {"grid", spec.grid.str()},
                   {"seed", spec.seed},
                   {"rng", std::string(SeededRandomSource::kAlgorithm)}};
      ImageTensor out;
      switch (spec.kind) {
        case AttackKind::kPatchDrop: {
          AttackResult r = patch_drop(x, spec, rng);
          side["loss"] = spec.loss_fraction;
          side["fill"] = spec.fill;
          side["mask"] = r.mask.to_text();
          out = std::move(r.image);
          break;
        }
        case AttackKind::kPatchMix: {
          side["loss"] = spec.loss_fraction;
          if (a.per_patch_donors) {
            std::vector<ImageTensor> pool;
            std::vector<std::string> ids;
            for (const auto& d : donors) {
              if (d == images[i]) continue;
              ImageTensor img = load(d, crop);
              if (!img.same_shape(x)) continue;
              pool.push_back(std::move(img));
              ids.push_back(d.string());
            }
            if (pool.empty()) throw ContractError("no donor of matching shape");
            std::vector<int> donor_of_patch;
            AttackResult r = patch_mix_attack_multi(x, pool, spec, rng, &donor_of_patch);
            side["mask"] = r.mask.to_text();
            side["donors"] = ids;
            side["donor_of_patch"] = donor_of_patch;
            out = std::move(r.image);
          } else {
            std::optional<ImageTensor> donor;
            std::string donor_path;
            for (std::size_t t = 0; t < donors.size() && !donor; ++t) {
              const fs::path& d = donors[(i + t) % donors.size()];
              if (d == images[i]) continue;
              ImageTensor img = load(d, crop);
              if (img.same_shape(x)) {
                donor = std::move(img);
                donor_path = d.string();
              }
            }
            if (!donor) throw ContractError("no donor of matching shape");
            AttackResult r = patch_mix_attack(x, *donor, spec, rng);
            side["mask"] = r.mask.to_text();
            side["donor"] = donor_path;
            out = std::move(r.image);
          }
          break;
        }
        case AttackKind::kPatchPermute: {
          PermuteResult r = patch_permute(x, spec.grid, rng);
          side["permutation"] = r.permutation;
          out = std::move(r.image);
          break;
        }
      }
      write_png(out_dir / (id + ".png"), out);
      write_text(out_dir / (id + ".json"), side.dump(2) + "\n");
    } catch (const Error& e) {
      ++failures;
      log(LogLevel::kError, "attack_failed", {{"image", id}, {"cause", e.what()}});
    }
  }
  log(LogLevel::kInfo, "attack_done",
      {{"images", images.size()}, {"failed", failures}, {"out_dir", out_dir.string()}});
  return failures ? kExitRuntime : kExitOk;
}

int run_smd(const SmdArgs& a, const fs::path& out_dir) {
  SmdConfig cfg;
  cfg.tolerance = a.tolerance;
  cfg.overlap_threshold = a.overlap_threshold;
  cfg.scale_min = a.scale_min;
  cfg.scale_max = a.scale_max;
  cfg.max_attempts = a.max_attempts;
  cfg.alpha_threshold = static_cast<float>(a.alpha_threshold);
  cfg.rotate = !a.upright;
  as_usage("tolerance", [&] { cfg.validate(); return 0; });
  const std::vector<double> targets = double_list("targets", a.targets);
  for (double t : targets) {
    if (!(t >= 0.0 && t < 1.0)) throw UsageError("--targets: values must lie in [0, 1)");
  }
  const SpriteLibrary library = SpriteLibrary::load(a.sprites);
  if (library.empty()) throw ContractError("sprite library " + a.sprites + " is empty");
  const auto records = generate_smd(a.in_dir, library, targets, a.seed, out_dir, cfg);
  std::size_t failed = 0;
  for (const auto& r : records) {
    if (!r.ok) {
      ++failed;
      log(LogLevel::kWarn, "smd_failed",
          {{"image", r.image_id}, {"target", r.target}, {"cause", r.error}});
    }
  }
  log(LogLevel::kInfo, "smd_done",
      {{"records", records.size()}, {"failed", failed}, {"out_dir", out_dir.string()}});
  return kExitOk;
}

int run_crise(const CriseArgs& a, const fs::path& out_dir) {
  RiseConfig cfg = rise_config(a.rise, a.seed);
  cfg.progress = progress_logger(a.image);
  const ImageTensor x = read_image(a.image);
  as_usage("stride", [&] { cfg.validate(x.height(), x.width()); return 0; });
  std::unique_ptr<Oracle> oracle = as_usage("oracle", [&] { return make_oracle(a.oracle); });
  std::size_t category = 0;
  if (a.category < 0) {
    const auto scores = score_batch(*oracle, std::span<const ImageTensor>(&x, 1));
    category = rank_categories(scores[0].scores, 1).front();
  } else {
    category = static_cast<std::size_t>(a.category);
    if (category >= oracle->num_categories()) {
      throw UsageError("--category exceeds the oracle's " +
                       std::to_string(oracle->num_categories()) + " categories");
    }
  }
  const SaliencyMap s = crise_map(x, *oracle, category, cfg);
  const fs::path heat = out_dir / a.out;
  write_png(heat, render_heatmap(x, s));
  if (!a.out_raw.empty()) write_raw_map(out_dir / a.out_raw, s);
  const std::size_t peak = s.argmax();
  log(LogLevel::kInfo, "crise_done",
      {{"category", category},
       {"heatmap", heat.string()},
       {"peak_row", peak / s.width},
       {"peak_col", peak % s.width}});
  return kExitOk;
}

int run_selectivity(const SelectivityArgs& a, const fs::path& out_dir) {
  SelectivityConfig cfg;
  cfg.grid = grid_value("grid", a.grid);
  cfg.level = a.level;
  cfg.crise = rise_config(a.rise, 0);
  cfg.per_class_cap = a.per_class_cap;
  cfg.seed = a.seed;
  cfg.center_crop = a.center_crop;
  if (!a.donor_dir.empty()) cfg.donor_dir = fs::path(a.donor_dir);
  if (!(a.level >= 0.0 && a.level <= kMaxAttackLoss)) {
    throw UsageError("--level must lie in [0, 0.8]");
  }
  std::unique_ptr<Oracle> oracle = as_usage("oracle", [&] { return make_oracle(a.oracle); });
  const SelectivityResult r = run_selectivity_eval(a.dataset_dir, a.labels, *oracle, cfg);
  for (const auto& rec : r.records) {
    if (!rec.ok) {
      log(LogLevel::kWarn, "selectivity_failed", {{"image", rec.image_id}, {"cause", rec.error}});
    }
  }
  write_per_class_csv(out_dir / "per_class.csv", r);
  write_selectivity_records_csv(out_dir / "records.csv", r);
  log(LogLevel::kInfo, "selectivity_done",
      {{"evaluated", r.evaluated},
       {"mean_inverse_patch_selectivity", r.mean},
       {"out_dir", out_dir.string()}});
  return kExitOk;
}

int run_eval(const EvalArgs& a, const fs::path& out_dir) {
  SweepConfig cfg;
  cfg.kind = as_usage("kind", [&] { return parse_attack_kind(a.kind); });
  cfg.grid = grid_value("grid", a.grid);
  cfg.fill = fill_values("fill", a.fill);
  cfg.seed = a.seed;
  cfg.workers = std::max<std::size_t>(1, a.workers);
  cfg.center_crop = a.center_crop;
  if (!a.donor_dir.empty()) cfg.donor_dir = fs::path(a.donor_dir);
  if (cfg.kind == AttackKind::kPatchPermute) {
    cfg.permute_grids = grid_list("shuffle-grids", a.shuffle_grids);
  } else {
    cfg.levels = double_list("levels", a.levels);
    for (double l : cfg.levels) {
      if (!(l >= 0.0 && l <= kMaxAttackLoss)) throw UsageError("--levels must lie in [0, 0.8]");
    }
  }
  if (a.oracle_labels.size() > a.oracles.size()) {
    throw UsageError("more --label values than --oracle values");
  }
  std::vector<SweepSummary> summaries;
  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < a.oracles.size(); ++i) {
    const std::string label =
        i < a.oracle_labels.size() ? a.oracle_labels[i] : "oracle" + std::to_string(i);
    if (label.find_first_of(",\n\"") != std::string::npos) {
      throw UsageError("--label values must not contain commas or quotes");
    }
    std::unique_ptr<Oracle> oracle =
        as_usage("oracle", [&] { return make_oracle(a.oracles[i]); });
    SweepResult r = run_attack_sweep(a.dataset_dir, a.labels, *oracle, cfg, label);
    for (const auto& l : r.summary.levels) {
      log(LogLevel::kInfo, "eval_level",
          {{"oracle", label}, {"level", l.level}, {"top1_acc", l.top1_acc},
           {"top5_acc", l.top5_acc}, {"n", l.n}, {"errors", l.errors}});
    }
    summaries.push_back(std::move(r.summary));
    records.insert(records.end(), r.records.begin(), r.records.end());
  }
  write_summary_csv(out_dir / "summary.csv", summaries);
  write_records_csv(out_dir / "records.csv", records);
  if (!a.no_plot) write_text(out_dir / "curves.svg", render_accuracy_svg(summaries));
  log(LogLevel::kInfo, "eval_done", {{"oracles", a.oracles.size()}, {"out_dir", out_dir.string()}});
  return kExitOk;
}

// ---- configuration plumbing ----

struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> required;
  std::function<int(const fs::path&)> body;
};

/// Pairs of options that cannot both be set.
const std::vector<std::pair<std::string, std::string>> kExclusive = {{"ratio", "beta"}};

bool is_meta(const std::string& key) {
  return key == "help" || key == "help-all" || key == "config";
}

std::string key_of(const CLI::Option* opt) {
  const auto& longs = opt->get_lnames();
  return longs.empty() ? std::string() : longs.front();
}

bool is_flag(const CLI::Option* opt) { return opt->get_expected_max() == 0; }
bool is_multi(const CLI::Option* opt) { return opt->get_expected_max() > 1; }

bool given(CLI::App* app, const std::string& key) {
  const CLI::Option* opt = app->get_option_no_throw("--" + key);
  return opt && opt->count() > 0;
}

std::optional<std::string> partner_of(const std::string& key) {
  for (const auto& [x, y] : kExclusive) {
    if (x == key) return y;
    if (y == key) return x;
  }
  return std::nullopt;
}

/// Tokens for config-file keys the command line left unset.
std::vector<std::string> config_tokens(CLI::App* app, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("--config: " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("--config: top level must be an object");
  if (j.contains("subcommand")) {
    if (j["subcommand"] != app->get_name()) {
      throw UsageError("--config: file is for '" + j["subcommand"].get<std::string>() +
                       "', not '" + app->get_name() + "'");
    }
    j = j.value("options", json::object());
  }
  std::vector<std::string> tokens;
  for (auto& [raw_key, value] : j.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    const CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (!opt || is_meta(key)) {
      throw UsageError("--config: unknown key '" + raw_key + "'");
    }
    if (opt->count() > 0) continue;
    if (auto p = partner_of(key); p && given(app, *p)) continue;
    const auto scalar = [&](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
      if (v.is_number()) return v.dump();
      throw UsageError("--config: key '" + raw_key + "' has an unsupported value");
    };
    if (value.is_null()) continue;
    if (value.is_array()) {
      for (const auto& v : value) tokens.push_back("--" + key + "=" + scalar(v));
    } else {
      tokens.push_back("--" + key + "=" + scalar(value));
    }
  }
  return tokens;
}

/// Every option's effective value, defaults included.
json resolved_config(CLI::App* app) {
  json opts = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string key = key_of(opt);
    if (key.empty() || is_meta(key)) continue;
    if (auto p = partner_of(key); p && opt->count() == 0 && given(app, *p)) continue;
    if (is_flag(opt)) {
      opts[key] = opt->count() > 0 && opt->as<bool>();
    } else if (is_multi(opt)) {
      opts[key] = opt->results();
    } else {
      const std::string v = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
      if (!v.empty()) opts[key] = v;
    }
  }
  return {{"subcommand", app->get_name()}, {"options", opts}};
}

void parse_tokens(CLI::App& app, std::vector<std::string> tokens) {
  std::reverse(tokens.begin(), tokens.end());
  app.parse(tokens);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Patch-level augmentation, occlusion attacks and contrastive saliency.",
               "patchlab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  CommonArgs common;
  MixArgs mix;
  AttackArgs attack;
  SmdArgs smd;
  CriseArgs crise;
  SelectivityArgs sel;
  EvalArgs eval;
  std::map<std::string, Command> commands;

  const auto add_common = [&](CLI::App* sub, bool out_dir_required) {
    sub->add_option("--config", common.config, "JSON file of option values; flags override it");
    sub->add_option("--log-level", common.log_level, "debug, info, warn or error")
        ->capture_default_str();
    auto* o = sub->add_option("--out-dir", common.out_dir, "Directory for all outputs");
    if (!out_dir_required) {
      common.out_dir = ".";
      o->capture_default_str();
    }
  };

  {
    CLI::App* s = app.add_subcommand("mix", "Mix two images (patch mixing, mixup or cutmix)");
    s->add_option("image-a,--image-a", mix.image_a, "First (source) image");
    s->add_option("image-b,--image-b", mix.image_b, "Second (donor) image");
    s->add_option("--grid", mix.grid, "Patch grid RxC")->capture_default_str();
    s->add_option("--ratio", mix.ratio, "Fixed donor ratio r; excludes --beta");
    s->add_option("--beta", mix.beta, "Beta(a,b) for the ratio draw")->capture_default_str();
    s->add_option("--eps", mix.eps, "Label smoothing")->capture_default_str();
    s->add_option("--method", mix.method, "patch, mixup, cutmix or random")
        ->capture_default_str();
    s->add_option("--categories", mix.categories, "Category count for the mixed label (0: none)")
        ->capture_default_str();
    s->add_option("--label-a", mix.label_a, "Category of image A")->capture_default_str();
    s->add_option("--label-b", mix.label_b, "Category of image B")->capture_default_str();
    s->add_option("--seed", mix.seed, "Random seed")->capture_default_str();
    s->add_flag("--center-crop", mix.center_crop, "Crop to the largest grid-divisible centre");
    add_common(s, true);
    commands["mix"] = {s, {"image-a", "image-b", "out-dir"},
                       [&](const fs::path& out) { return run_mix(mix, out); }};
  }
  {
    CLI::App* s = app.add_subcommand("attack", "Apply a patch attack to every image in a folder");
    s->add_option("in-dir,--in-dir", attack.in_dir, "Input image folder");
    s->add_option("out-dir,--out-dir", common.out_dir, "Output folder");
    s->add_option("--kind", attack.kind, "mix, drop or permute")->capture_default_str();
    s->add_option("--grid", attack.grid, "Patch grid RxC")->capture_default_str();
    s->add_option("--loss", attack.loss, "Information loss fraction")->capture_default_str();
    s->add_option("--fill", attack.fill, "Drop fill: v or r,g,b")->capture_default_str();
    s->add_option("--donor-dir", attack.donor_dir, "Donor folder for mix (default: in-dir)");
    s->add_flag("--per-patch-donors", attack.per_patch_donors,
                "Draw each replaced patch from a random donor");
    s->add_option("--seed", attack.seed, "Random seed")->capture_default_str();
    s->add_flag("--center-crop", attack.center_crop, "Crop to the largest grid-divisible centre");
    s->add_option("--config", common.config, "JSON file of option values; flags override it");
    s->add_option("--log-level", common.log_level, "debug, info, warn or error")
        ->capture_default_str();
    commands["attack"] = {s, {"in-dir", "out-dir"},
                          [&](const fs::path& out) { return run_attack(attack, out); }};
  }
  {
    CLI::App* s = app.add_subcommand("smd", "Superimpose occluders at target occlusion levels");
    s->add_option("in-dir,--in-dir", smd.in_dir, "Input image folder");
    s->add_option("out-dir,--out-dir", common.out_dir, "Output folder");
    s->add_option("--sprites", smd.sprites, "Occluder folder: <category>/<sprite>.png");
    s->add_option("--targets", smd.targets, "Target occlusion fractions")->capture_default_str();
    s->add_option("--tolerance", smd.tolerance, "Accepted |achieved - target|")
        ->capture_default_str();
    s->add_option("--overlap-threshold", smd.overlap_threshold,
                  "Targets at or below this forbid overlap")
        ->capture_default_str();
    s->add_option("--scale-min", smd.scale_min, "Smallest sprite extent / image side")
        ->capture_default_str();
    s->add_option("--scale-max", smd.scale_max, "Largest sprite extent / image side")
        ->capture_default_str();
    s->add_option("--max-attempts", smd.max_attempts, "Placement attempts per image")
        ->capture_default_str();
    s->add_option("--alpha-threshold", smd.alpha_threshold, "Alpha counted as occluded")
        ->capture_default_str();
    s->add_flag("--upright", smd.upright, "Do not rotate occluders");
    s->add_option("--seed", smd.seed, "Random seed")->capture_default_str();
    s->add_option("--config", common.config, "JSON file of option values; flags override it");
    s->add_option("--log-level", common.log_level, "debug, info, warn or error")
        ->capture_default_str();
    commands["smd"] = {s, {"in-dir", "out-dir", "sprites"},
                       [&](const fs::path& out) { return run_smd(smd, out); }};
  }
  {
    CLI::App* s = app.add_subcommand("crise", "Contrastive saliency map for one image");
    s->add_option("image,--image", crise.image, "Input image");
    s->add_option("--oracle", crise.oracle,
                  "builtin:linear:<file>, cmd:\"<command>\" or tcp:<host>:<port>");
    s->add_option("--category", crise.category, "Category to explain (-1: top-1)")
        ->capture_default_str();
    add_rise_options(s, crise.rise);
    s->add_option("--seed", crise.seed, "Random seed")->capture_default_str();
    s->add_option("--out", crise.out, "Heatmap PNG, relative to --out-dir")
        ->capture_default_str();
    s->add_option("--out-raw", crise.out_raw, "Raw float32 map, relative to --out-dir");
    add_common(s, false);
    commands["crise"] = {s, {"image", "oracle"},
                         [&](const fs::path& out) { return run_crise(crise, out); }};
  }
  {
    CLI::App* s = app.add_subcommand("selectivity", "Inverse patch selectivity over a dataset");
    s->add_option("dataset-dir,--dataset-dir", sel.dataset_dir, "Labeled image folder");
    s->add_option("--labels", sel.labels, "CSV of image_id,category_index");
    s->add_option("--oracle", sel.oracle,
                  "builtin:linear:<file>, cmd:\"<command>\" or tcp:<host>:<port>");
    s->add_option("--grid", sel.grid, "Patch grid RxC")->capture_default_str();
    s->add_option("--level", sel.level, "Patch mixing loss")->capture_default_str();
    add_rise_options(s, sel.rise);
    s->add_option("--per-class-cap", sel.per_class_cap, "Images per class")
        ->capture_default_str();
    s->add_option("--donor-dir", sel.donor_dir, "Donor folder (default: dataset)");
    s->add_option("--seed", sel.seed, "Random seed")->capture_default_str();
    s->add_flag("--center-crop", sel.center_crop, "Crop to the largest grid-divisible centre");
    add_common(s, true);
    commands["selectivity"] = {s, {"dataset-dir", "labels", "oracle", "out-dir"},
                               [&](const fs::path& out) { return run_selectivity(sel, out); }};
  }
  {
    CLI::App* s = app.add_subcommand("eval", "Accuracy versus information loss sweep");
    s->add_option("dataset-dir,--dataset-dir", eval.dataset_dir, "Labeled image folder");
    s->add_option("--labels", eval.labels, "CSV of image_id,category_index");
    s->add_option("--oracle", eval.oracles, "Oracle spec; repeat for several");
    s->add_option("--label", eval.oracle_labels, "Series label per --oracle");
    s->add_option("--kind", eval.kind, "mix, drop or permute")->capture_default_str();
    s->add_option("--grid", eval.grid, "Patch grid RxC for mix/drop")->capture_default_str();
    s->add_option("--levels", eval.levels, "Loss levels for mix/drop")->capture_default_str();
    s->add_option("--shuffle-grids", eval.shuffle_grids, "Grids for permute")
        ->capture_default_str();
    s->add_option("--fill", eval.fill, "Drop fill: v or r,g,b")->capture_default_str();
    s->add_option("--donor-dir", eval.donor_dir, "Donor folder for mix (default: dataset)");
    s->add_option("--workers", eval.workers, "Images evaluated concurrently")
        ->capture_default_str();
    s->add_option("--seed", eval.seed, "Random seed")->capture_default_str();
    s->add_flag("--center-crop", eval.center_crop, "Crop to the largest grid-divisible centre");
    s->add_flag("--no-plot", eval.no_plot, "Skip curves.svg");
    add_common(s, true);
    commands["eval"] = {s, {"dataset-dir", "labels", "oracle", "out-dir"},
                        [&](const fs::path& out) { return run_eval(eval, out); }};
  }

  std::vector<std::string> tokens(argv + 1, argv + argc);
  Command* cmd = nullptr;
  try {
    parse_tokens(app, tokens);
    cmd = &commands.at(app.get_subcommands().front()->get_name());
    for (const auto& [x, y] : kExclusive) {
      if (given(cmd->app, x) && given(cmd->app, y)) {
        throw UsageError("--" + x + " and --" + y + " are mutually exclusive");
      }
    }
    if (!common.config.empty()) {
      const auto extra = config_tokens(cmd->app, common.config);
      if (!extra.empty()) {
        tokens.insert(tokens.end(), extra.begin(), extra.end());
        parse_tokens(app, tokens);
      }
    }
    for (const auto& key : cmd->required) {
      if (!given(cmd->app, key)) throw UsageError("missing required argument --" + key);
    }
    set_log_level(as_usage("log-level", [&] { return parse_log_level(common.log_level); }));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return kExitUsage;
  }

  const fs::path out_dir = common.out_dir;
  try {
    fs::create_directories(out_dir);
    write_text(out_dir / "resolved_config.json", resolved_config(cmd->app).dump(2) + "\n");
    return cmd->body(out_dir);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    log(LogLevel::kError, "failed", {{"subcommand", cmd->app->get_name()}, {"cause", e.what()}});
    return kExitRuntime;
  }
}

}  // namespace patchlab::cli
