#include "patchlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "patchlab/error.hpp"
#include "patchlab/image_io.hpp"
#include "patchlab/rng.hpp"

namespace patchlab {
namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_level(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct DonorRef {
  std::string id;
  std::filesystem::path path;
  std::optional<std::size_t> label;
};

std::vector<DonorRef> donor_pool(const std::optional<std::filesystem::path>& donor_dir,
                                 const Dataset& dataset,
                                 const std::map<std::string, std::size_t>& labels) {
  std::vector<DonorRef> pool;
  if (donor_dir) {
    for (const auto& p : list_images(*donor_dir)) {
      DonorRef d{p.stem().string(), p, std::nullopt};
      if (auto it = labels.find(d.id); it != labels.end()) d.label = it->second;
      pool.push_back(std::move(d));
    }
  } else {
    for (const auto& item : dataset.items) pool.push_back({item.id, item.path, item.label});
  }
  return pool;
}

ImageTensor load_for_grid(const std::filesystem::path& path, GridSpec grid,
                          bool center_crop) {
  ImageTensor img = read_image(path);
  return center_crop ? center_crop_to_grid(img, grid) : img;
}

/// Round-robin from `start`, skipping the image itself, donors of the same
/// label and donors of a different shape.
ImageTensor pick_donor(const std::vector<DonorRef>& pool, std::size_t start,
                       const DatasetItem& item, const ImageTensor& like, GridSpec grid,
                       bool center_crop) {
  for (std::size_t t = 0; t < pool.size(); ++t) {
    const DonorRef& d = pool[(start + t) % pool.size()];
    if (d.path == item.path || (d.label && *d.label == item.label)) continue;
    ImageTensor img = load_for_grid(d.path, grid, center_crop);
    if (img.same_shape(like)) return img;
  }
  throw ContractError("no donor with a different label and matching shape for " + item.id);
}

}  // namespace

std::map<std::string, std::size_t> read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::map<std::string, std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected id,label");
    }
    const std::string id = trim(line.substr(0, comma));
    const std::string value = trim(line.substr(comma + 1));
    std::size_t label = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), label);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      if (line_no == 1) continue;  // header
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad category index");
    }
    labels[id] = label;
  }
  return labels;
}

Dataset Dataset::load(const std::filesystem::path& dir,
                      const std::map<std::string, std::size_t>& labels) {
  Dataset ds;
  for (const auto& p : list_images(dir)) {
    const std::string id = p.stem().string();
    const auto it = labels.find(id);
    if (it == labels.end()) {
      ds.unlabeled.push_back(id);
    } else {
      ds.items.push_back({id, p, it->second});
    }
  }
  return ds;
}

std::vector<std::size_t> rank_categories(const std::vector<double>& scores, std::size_t n) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  n = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(n);
  return idx;
}

std::vector<LevelSummary> summarize_records(const std::vector<EvalRecord>& records,
                                            std::size_t errors_per_level) {
  std::map<double, LevelSummary> by_level;
  for (const auto& r : records) {
    LevelSummary& s = by_level[r.level];
    s.level = r.level;
    ++s.n;
    s.top1_acc += r.correct1 ? 1.0 : 0.0;
    s.top5_acc += r.correct5 ? 1.0 : 0.0;
  }
  std::vector<LevelSummary> out;
  for (auto& [level, s] : by_level) {
    if (s.n > 0) {
      s.top1_acc /= static_cast<double>(s.n);
      s.top5_acc /= static_cast<double>(s.n);
    }
    s.errors = errors_per_level;
    out.push_back(s);
  }
  return out;
}

SweepResult run_attack_sweep(const std::filesystem::path& dataset_dir,
                             const std::filesystem::path& label_file, Oracle& oracle,
                             const SweepConfig& cfg, std::string label) {
  const auto labels = read_label_file(label_file);
  const Dataset ds = Dataset::load(dataset_dir, labels);
  const bool permute = cfg.kind == AttackKind::kPatchPermute;
  if (permute && cfg.permute_grids.empty()) {
    throw ContractError("permute sweep needs at least one shuffle grid");
  }
  if (!permute) {
    if (cfg.levels.empty()) throw ContractError("sweep needs at least one level");
    for (double level : cfg.levels) {
      AttackSpec probe;
      probe.kind = cfg.kind;
      probe.loss_fraction = level;
      probe.fill = cfg.fill;
      probe.validate();
    }
  }
  const std::size_t n_levels = permute ? cfg.permute_grids.size() : cfg.levels.size();
  const auto level_value = [&](std::size_t li) {
    return permute ? static_cast<double>(cfg.permute_grids[li].rows *
                                         cfg.permute_grids[li].cols)
                   : cfg.levels[li];
  };
  const std::vector<DonorRef> donors = cfg.kind == AttackKind::kPatchMix
                                           ? donor_pool(cfg.donor_dir, ds, labels)
                                           : std::vector<DonorRef>{};
  const SeededRandomSource root(cfg.seed);

  // Per image: one record per level, or nothing plus an error count.
  std::vector<std::vector<EvalRecord>> per_image(ds.items.size());
  std::vector<std::uint8_t> failed(ds.items.size(), 0);
  parallel_for(ds.items.size(), cfg.workers, [&](std::size_t i) {
    const DatasetItem& item = ds.items[i];
    try {
      if (item.label >= oracle.num_categories()) {
        throw ContractError("label exceeds oracle category count");
      }
      const ImageTensor img = load_for_grid(item.path, cfg.grid, cfg.center_crop);
      std::optional<ImageTensor> donor;
      if (cfg.kind == AttackKind::kPatchMix) {
        donor = pick_donor(donors, i, item, img, cfg.grid, cfg.center_crop);
      }
      std::vector<ImageTensor> attacked;
      attacked.reserve(n_levels);
      for (std::size_t li = 0; li < n_levels; ++li) {
        SeededRandomSource rng = root.derive(item.id).derive(std::uint64_t{li});
        AttackSpec spec;
        spec.kind = cfg.kind;
        spec.grid = permute ? cfg.permute_grids[li] : cfg.grid;
        spec.loss_fraction = permute ? 0.0 : cfg.levels[li];
        spec.fill = cfg.fill;
        spec.seed = rng.seed();
        switch (cfg.kind) {
          case AttackKind::kPatchMix:
            attacked.push_back(patch_mix_attack(img, *donor, spec, rng).image);
            break;
          case AttackKind::kPatchDrop:
            attacked.push_back(patch_drop(img, spec, rng).image);
            break;
          case AttackKind::kPatchPermute:
            attacked.push_back(patch_permute(img, spec.grid, rng).image);
            break;
        }
      }
      const auto scores = score_batch(oracle, attacked);
      for (std::size_t li = 0; li < n_levels; ++li) {
        EvalRecord r;
        r.oracle = label;
        r.image_id = item.id;
        r.ground_truth = item.label;
        r.attack = std::string(attack_name(cfg.kind)) + ":" +
                   (permute ? cfg.permute_grids[li] : cfg.grid).str();
        r.level = level_value(li);
        r.top5 = rank_categories(scores[li].scores, 5);
        r.top1 = r.top5.front();
        r.correct1 = r.top1 == item.label;
        r.correct5 = std::find(r.top5.begin(), r.top5.end(), item.label) != r.top5.end();
        per_image[i].push_back(std::move(r));
      }
    } catch (const TransportError&) {
      throw;
    } catch (const Error&) {
      failed[i] = 1;
      per_image[i].clear();
    }
  });

  SweepResult result;
  result.summary.label = std::move(label);
  const std::size_t errors =
      ds.unlabeled.size() +
      static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  for (std::size_t li = 0; li < n_levels; ++li) {
    LevelSummary s;
    s.level = level_value(li);
    s.errors = errors;
    result.summary.levels.push_back(s);
  }
  for (const auto& recs : per_image) {
    for (std::size_t li = 0; li < recs.size(); ++li) {
      LevelSummary& s = result.summary.levels[li];
      ++s.n;
      s.top1_acc += recs[li].correct1 ? 1.0 : 0.0;
      s.top5_acc += recs[li].correct5 ? 1.0 : 0.0;
      result.records.push_back(recs[li]);
    }
  }
  for (auto& s : result.summary.levels) {
    if (s.n > 0) {
      s.top1_acc /= static_cast<double>(s.n);
      s.top5_acc /= static_cast<double>(s.n);
    }
  }
  return result;
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SweepSummary>& summaries) {
  std::ostringstream os;
  os << "oracle,level,metric,value,n,errors\n";
  for (const auto& s : summaries) {
    for (const auto& l : s.levels) {
      os << s.label << ',' << fmt_level(l.level) << ",top1_acc," << fmt(l.top1_acc) << ','
         << l.n << ',' << l.errors << '\n';
      os << s.label << ',' << fmt_level(l.level) << ",top5_acc," << fmt(l.top5_acc) << ','
         << l.n << ',' << l.errors << '\n';
    }
  }
  const std::string text = os.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<EvalRecord>& records) {
  std::ostringstream os;
  os << "oracle,image_id,ground_truth,attack,level,top1,top5,correct1,correct5\n";
  for (const auto& r : records) {
    os << r.oracle << ',' << r.image_id << ',' << r.ground_truth << ',' << r.attack << ','
       << fmt_level(r.level) << ',' << r.top1 << ',';
    for (std::size_t i = 0; i < r.top5.size(); ++i) os << (i ? ";" : "") << r.top5[i];
    os << ',' << (r.correct1 ? 1 : 0) << ',' << (r.correct5 ? 1 : 0) << '\n';
  }
  const std::string text = os.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

SelectivityResult run_selectivity_eval(const std::filesystem::path& dataset_dir,
                                       const std::filesystem::path& label_file,
                                       Oracle& oracle, const SelectivityConfig& cfg) {
  const auto labels = read_label_file(label_file);
  const Dataset ds = Dataset::load(dataset_dir, labels);
  std::map<std::size_t, std::size_t> taken;
  std::vector<const DatasetItem*> sample;
  for (const auto& item : ds.items) {
    if (taken[item.label] < cfg.per_class_cap) {
      ++taken[item.label];
      sample.push_back(&item);
    }
  }
  const std::vector<DonorRef> donors = donor_pool(cfg.donor_dir, ds, labels);
  const SeededRandomSource root(cfg.seed);

  SelectivityResult result;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const DatasetItem& item = *sample[i];
    SelectivityRecord rec;
    rec.image_id = item.id;
    rec.ground_truth = item.label;
    try {
      const ImageTensor img = load_for_grid(item.path, cfg.grid, cfg.center_crop);
      const ImageTensor donor = pick_donor(donors, i, item, img, cfg.grid, cfg.center_crop);
      SeededRandomSource rng = root.derive(item.id);
      AttackSpec spec;
      spec.kind = AttackKind::kPatchMix;
      spec.grid = cfg.grid;
      spec.loss_fraction = cfg.level;
      const AttackResult attacked = patch_mix_attack(img, donor, spec, rng);
      const auto scores = score_batch(oracle, std::span<const ImageTensor>(&attacked.image, 1));
      rec.predicted = rank_categories(scores[0].scores, 1).front();
      RiseConfig rise = cfg.crise;
      rise.seed = rng.next_u64();
      const SaliencyMap s =
          softmax_normalize(crise_map(attacked.image, oracle, rec.predicted, rise));
      rec.inverse_selectivity = inverse_patch_selectivity(s, attacked.mask);
      rec.uniform_baseline = attacked.mask.fraction();
      rec.ok = true;
    } catch (const Error& e) {
      rec.error = e.what();
    }
    result.records.push_back(std::move(rec));
  }
  double total = 0.0;
  for (const auto& r : result.records) {
    if (!r.ok) continue;
    auto& [n, mean] = result.per_class[r.ground_truth];
    ++n;
    mean += r.inverse_selectivity;
    total += r.inverse_selectivity;
    ++result.evaluated;
  }
  for (auto& [cls, entry] : result.per_class) entry.second /= static_cast<double>(entry.first);
  result.mean = result.evaluated ? total / static_cast<double>(result.evaluated) : 0.0;
  return result;
}

void write_per_class_csv(const std::filesystem::path& path, const SelectivityResult& r) {
  std::ostringstream os;
  os << "class,n,mean_inverse_patch_selectivity\n";
  for (const auto& [cls, entry] : r.per_class) {
    os << cls << ',' << entry.first << ',' << fmt(entry.second) << '\n';
  }
  os << "all," << r.evaluated << ',' << fmt(r.mean) << '\n';
  const std::string text = os.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_selectivity_records_csv(const std::filesystem::path& path,
                                   const SelectivityResult& r) {
  std::ostringstream os;
  os << "image_id,ground_truth,predicted,inverse_patch_selectivity,uniform_baseline,ok,error\n";
  for (const auto& rec : r.records) {
    std::string err = rec.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << rec.image_id << ',' << rec.ground_truth << ',' << rec.predicted << ','
       << fmt(rec.inverse_selectivity) << ',' << fmt(rec.uniform_baseline) << ','
       << (rec.ok ? 1 : 0) << ',' << err << '\n';
  }
  const std::string text = os.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace patchlab
