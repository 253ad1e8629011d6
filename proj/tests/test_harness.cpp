#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "patchlab/error.hpp"
#include "patchlab/harness.hpp"
#include "patchlab/image_io.hpp"

using namespace patchlab;
namespace fx = patchlab::fixtures;

namespace {

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

// Five bright (label 1) and five dark (label 0) images plus one unlabeled.
void write_threshold_dataset(const fx::TempDir& tmp) {
  std::filesystem::create_directories(tmp / "images");
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (int i = 0; i < 5; ++i) {
    const std::string bright = "bright" + std::to_string(i);
    const std::string dark = "dark" + std::to_string(i);
    write_png(tmp / "images" / (bright + ".png"), fx::textured_image(28, 28, 3, 150 + 20 * i, 10));
    write_png(tmp / "images" / (dark + ".png"), fx::textured_image(28, 28, 3, 10 + 5 * i, 5));
    rows.emplace_back(bright, 1);
    rows.emplace_back(dark, 0);
  }
  write_png(tmp / "images" / "stray.png", fx::textured_image(28, 28, 3, 100, 0));
  fx::write_labels(tmp / "labels.csv", rows);
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("label file parsing") {
    fx::TempDir tmp("labels");
    {
      std::ofstream out(tmp / "a.csv");
      out << "image_id,category_index\nx,3\ny, 7\n\n";
    }
    const auto labels = read_label_file(tmp / "a.csv");
    CHECK(labels.size() == 2);
    CHECK(labels.at("y") == 7);
    {
      std::ofstream out(tmp / "b.csv");
      out << "x,3\ny,seven\n";
    }
    CHECK_THROWS_AS(read_label_file(tmp / "b.csv"), IoError);
    CHECK_THROWS_AS(read_label_file(tmp / "missing.csv"), IoError);
  }

  TEST_CASE("ranking breaks ties by index") {
    const std::vector<double> scores{0.1, 0.5, 0.5, 0.9, 0.1, 0.5};
    CHECK(rank_categories(scores, 4) == std::vector<std::size_t>{3, 1, 2, 5});
    CHECK(rank_categories(scores, 10).size() == 6);
  }

  TEST_CASE("clean sweep matches direct prediction") {
    fx::TempDir tmp("sweep");
    write_threshold_dataset(tmp);
    auto probe = fx::mean_threshold_probe(28, 28, 3, 0.3);
    SweepConfig cfg;
    cfg.grid = {7, 7};
    cfg.levels = {0.0};
    const auto r = run_attack_sweep(tmp / "images", tmp / "labels.csv", probe, cfg, "probe");
    REQUIRE(r.summary.levels.size() == 1);
    const auto& level = r.summary.levels[0];
    CHECK(level.n == 10);
    CHECK(level.errors == 1);
    CHECK(level.top1_acc == 1.0);
    CHECK(level.top5_acc == 1.0);
    for (const auto& rec : r.records) {
      CHECK(rec.oracle == "probe");
      CHECK(rec.top1 == rec.ground_truth);
      CHECK(rec.top5.size() == 2);
    }
  }

  TEST_CASE("summary agrees with a recount of the records") {
    fx::TempDir tmp("recount");
    write_threshold_dataset(tmp);
    auto probe = fx::mean_threshold_probe(28, 28, 3, 0.3);
    SweepConfig cfg;
    cfg.levels = {0.0, 0.2, 0.4, 0.6, 0.8};
    cfg.seed = 3;
    cfg.workers = 3;
    const auto r = run_attack_sweep(tmp / "images", tmp / "labels.csv", probe, cfg);
    const auto recount = summarize_records(r.records, 1);
    REQUIRE(recount.size() == r.summary.levels.size());
    for (std::size_t i = 0; i < recount.size(); ++i) {
      CHECK(recount[i].level == r.summary.levels[i].level);
      CHECK(recount[i].n == r.summary.levels[i].n);
      CHECK(recount[i].top1_acc == r.summary.levels[i].top1_acc);
      CHECK(recount[i].top5_acc == r.summary.levels[i].top5_acc);
    }
    // Worker count does not change results.
    cfg.workers = 1;
    const auto serial = run_attack_sweep(tmp / "images", tmp / "labels.csv", probe, cfg);
    REQUIRE(serial.records.size() == r.records.size());
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      CHECK(serial.records[i].image_id == r.records[i].image_id);
      CHECK(serial.records[i].top1 == r.records[i].top1);
    }
  }

  TEST_CASE("permute sweep uses the patch count as level") {
    fx::TempDir tmp("perm");
    write_threshold_dataset(tmp);
    auto probe = fx::mean_threshold_probe(28, 28, 3, 0.3);
    SweepConfig cfg;
    cfg.kind = AttackKind::kPatchPermute;
    cfg.permute_grids = {{2, 2}, {4, 4}, {14, 14}};
    const auto r = run_attack_sweep(tmp / "images", tmp / "labels.csv", probe, cfg);
    REQUIRE(r.summary.levels.size() == 3);
    CHECK(r.summary.levels[0].level == 4.0);
    CHECK(r.summary.levels[2].level == 196.0);
    // A mean classifier is blind to patch order.
    for (const auto& l : r.summary.levels) CHECK(l.top1_acc == 1.0);
  }

  TEST_CASE("non-divisible images count as errors") {
    fx::TempDir tmp("div");
    write_threshold_dataset(tmp);
    auto probe = fx::mean_threshold_probe(28, 28, 3, 0.3);
    SweepConfig cfg;
    cfg.grid = {5, 5};
    cfg.levels = {0.2};
    const auto r = run_attack_sweep(tmp / "images", tmp / "labels.csv", probe, cfg);
    CHECK(r.summary.levels[0].n == 0);
    CHECK(r.summary.levels[0].errors == 11);
  }

  TEST_CASE("csv outputs") {
    fx::TempDir tmp("csv");
    write_threshold_dataset(tmp);
    auto probe = fx::mean_threshold_probe(28, 28, 3, 0.3);
    SweepConfig cfg;
    cfg.levels = {0.0, 0.5};
    const auto r = run_attack_sweep(tmp / "images", tmp / "labels.csv", probe, cfg, "lin");
    write_summary_csv(tmp / "summary.csv", {r.summary});
    write_records_csv(tmp / "records.csv", r.records);
    const auto summary = fx::read_text(tmp / "summary.csv");
    CHECK(summary.rfind("oracle,level,metric,value,n,errors\n", 0) == 0);
    CHECK(count_of(summary, "\n") == 5);
    CHECK(count_of(summary, "lin,0.0000,top1_acc,1.000000,10,1") == 1);
    const auto records = fx::read_text(tmp / "records.csv");
    CHECK(records.rfind("oracle,image_id,ground_truth,attack,level,top1,top5,correct1,correct5\n",
                        0) == 0);
    CHECK(count_of(records, "\n") == 21);
  }

  TEST_CASE("accuracy chart") {
    SweepSummary a{"a<&>", {{0.0, 5, 1.0, 1.0, 0}, {0.4, 5, 0.6, 0.8, 0}, {0.8, 5, 0.2, 0.4, 0}}};
    SweepSummary b{"b", {{0.0, 5, 0.9, 1.0, 0}}};
    const auto svg = render_accuracy_svg({a, b});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count_of(svg, "<polyline") == 1);
    CHECK(count_of(svg, "<circle") == 4);
    CHECK(count_of(svg, "a&lt;&amp;&gt;") == 1);
    CHECK(render_accuracy_svg({a, b}) == svg);
  }

  TEST_CASE("selectivity eval on a tiny dataset") {
    fx::TempDir tmp("sel");
    std::filesystem::create_directories(tmp / "images");
    std::filesystem::create_directories(tmp / "donors");
    write_png(tmp / "images" / "probe.png", fx::random_image(28, 28, 3, 1));
    write_png(tmp / "images" / "other.png", fx::random_image(28, 28, 3, 2));
    write_png(tmp / "donors" / "donor.png", fx::random_image(28, 28, 3, 3));
    fx::write_labels(tmp / "labels.csv", {{"probe", 0}, {"other", 0}, {"donor", 1}});
    auto probe = fx::random_probe(28, 28, 3, 2, 4, 0.01);
    SelectivityConfig cfg;
    cfg.grid = {7, 7};
    cfg.level = 0.3;
    cfg.crise.n_masks = 50;
    cfg.crise.cell_stride = 7;
    cfg.per_class_cap = 1;
    cfg.donor_dir = tmp / "donors";
    const auto r = run_selectivity_eval(tmp / "images", tmp / "labels.csv", probe, cfg);
    CHECK(r.evaluated == 1);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].ok);
    CHECK(r.records[0].uniform_baseline == doctest::Approx(15.0 / 49.0));
    CHECK(r.records[0].inverse_selectivity > 0.0);
    CHECK(r.records[0].inverse_selectivity < 1.0);
    write_per_class_csv(tmp / "per_class.csv", r);
    const auto text = fx::read_text(tmp / "per_class.csv");
    CHECK(text.rfind("class,n,mean_inverse_patch_selectivity\n", 0) == 0);
    CHECK(count_of(text, "all,1,") == 1);
  }
}
