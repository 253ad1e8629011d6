#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "patchlab/crise.hpp"
#include "patchlab/error.hpp"
#include "patchlab/grid.hpp"
#include "patchlab/oracle.hpp"
#include "patchlab/rng.hpp"

using namespace patchlab;
namespace fx = patchlab::fixtures;

namespace {

RiseConfig small_config(std::size_t n_masks, std::uint64_t seed) {
  RiseConfig cfg;
  cfg.n_masks = n_masks;
  cfg.cell_stride = 7;
  cfg.keep_prob = 0.5;
  cfg.seed = seed;
  cfg.batch_size = 16;
  return cfg;
}

PatchMask mask_with(PatchGrid grid, std::size_t count) {
  PatchMask m(grid);
  for (std::size_t i = 0; i < count; ++i) m.set(i);
  return m;
}

}  // namespace

TEST_SUITE("crise") {
  TEST_CASE("masks depend only on seed and index") {
    const auto cfg = small_config(8, 3);
    const auto all = generate_rise_masks(cfg, 28, 28);
    std::vector<float> one(28 * 28);
    sample_rise_mask(cfg, 28, 28, 5, one);
    CHECK(std::equal(one.begin(), one.end(), all.mask(5).begin()));
    auto other = cfg;
    other.seed = 4;
    sample_rise_mask(other, 28, 28, 5, one);
    CHECK_FALSE(std::equal(one.begin(), one.end(), all.mask(5).begin()));
  }

  TEST_CASE("mask values lie in [0, 1] with mean near p") {
    auto cfg = small_config(400, 9);
    cfg.keep_prob = 0.3;
    const auto masks = generate_rise_masks(cfg, 28, 28);
    double total = 0.0;
    for (std::size_t i = 0; i < masks.count(); ++i) {
      for (float v : masks.mask(i)) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
        total += v;
      }
    }
    CHECK(total / static_cast<double>(masks.count() * masks.plane()) ==
          doctest::Approx(0.3).epsilon(0.05));
  }

  TEST_CASE("config validation") {
    auto cfg = small_config(10, 0);
    CHECK_NOTHROW(cfg.validate(28, 28));
    cfg.keep_prob = 1.0;
    CHECK_THROWS_AS(cfg.validate(28, 28), ContractError);
    cfg = small_config(0, 0);
    CHECK_THROWS_AS(cfg.validate(28, 28), ContractError);
    cfg = small_config(10, 0);
    cfg.cell_stride = 20;
    CHECK_THROWS_AS(cfg.validate(28, 28), ContractError);
  }

  TEST_CASE("batch size does not change the map") {
    auto probe = fx::random_probe(28, 28, 3, 3, 2, 0.05);
    const auto x = fx::random_image(28, 28, 3, 1);
    auto cfg = small_config(50, 17);
    cfg.batch_size = 7;
    const auto a = crise_map(x, probe, 1, cfg);
    cfg.batch_size = 64;
    const auto b = crise_map(x, probe, 1, cfg);
    CHECK(a.values == b.values);
  }

  TEST_CASE("identical heads give an all-zero map") {
    // Zero weights and matching biases make f and f' the same function.
    LinearProbeClassifier flat(28, 28, 3, {std::vector<float>(28 * 28 * 3, 0.0f)}, {0.7},
                               std::vector<double>{0.7});
    const auto x = fx::random_image(28, 28, 3, 2);
    for (ScoreMode mode : {ScoreMode::kLogit, ScoreMode::kProbability}) {
      auto cfg = small_config(20, 1);
      cfg.mode = mode;
      const auto s = crise_map(x, flat, 0, cfg);
      for (double v : s.values) REQUIRE(v == 0.0);
    }
  }

  TEST_CASE("mode handling") {
    OracleScores logits{{0.0, std::log(3.0)}, ScoreKind::kLogit};
    CHECK(mode_score(logits, 1, ScoreMode::kLogit) == std::log(3.0));
    CHECK(mode_score(logits, 1, ScoreMode::kProbability) == doctest::Approx(0.75));
    OracleScores probs{{0.25, 0.75}, ScoreKind::kProbability};
    CHECK(mode_score(probs, 0, ScoreMode::kProbability) == 0.25);
    CHECK_THROWS_AS(mode_score(probs, 0, ScoreMode::kLogit), ContractError);
    CHECK(parse_score_mode("logit") == ScoreMode::kLogit);
    CHECK(parse_score_mode("probability") == ScoreMode::kProbability);
    CHECK_THROWS_AS(parse_score_mode("odds"), ContractError);
  }

  TEST_CASE("estimator preconditions") {
    auto probe = fx::random_probe(28, 28, 3, 2, 2);
    const auto x = fx::random_image(28, 28, 3, 1);
    CHECK_THROWS_AS(crise_map(x, probe, 2, small_config(4, 0)), ContractError);
    MaskBatch wrong(14, 28, 2);
    CHECK_THROWS_AS(crise_map_from_masks(x, probe, 0, wrong, small_config(4, 0)), ShapeError);
  }

  TEST_CASE("selectivity on a uniform map") {
    const auto grid = make_grid(14, 14, 7, 7);
    const auto mask = mask_with(grid, 15);
    SaliencyMap zeros{14, 14, std::vector<double>(196, 0.0), false};
    const auto uniform = softmax_normalize(zeros);
    CHECK(uniform.normalized);
    CHECK(uniform.values[0] == doctest::Approx(1.0 / 196.0));
    CHECK(inverse_patch_selectivity(uniform, mask) == doctest::Approx(15.0 / 49.0));
    CHECK(patch_selectivity(uniform, mask) == doctest::Approx((1.0 / 49.0) * (34.0 / 49.0)));
    // Identity between the two forms on a normalized map.
    const double n = static_cast<double>(grid.n_patches());
    CHECK(n * patch_selectivity(uniform, mask) + inverse_patch_selectivity(uniform, mask) ==
          doctest::Approx(1.0));
    CHECK(inverse_patch_selectivity(uniform, PatchMask(grid)) == 0.0);
    CHECK_THROWS_AS(inverse_patch_selectivity(zeros, mask), ContractError);
    CHECK_THROWS_AS(softmax_normalize(uniform), ContractError);
    const auto other = mask_with(make_grid(28, 28, 7, 7), 3);
    CHECK_THROWS_AS(patch_selectivity(uniform, other), ShapeError);
  }

  TEST_CASE("selectivity identity on random maps") {
    SeededRandomSource rng(5);
    const auto grid = make_grid(28, 28, 7, 7);
    for (int trial = 0; trial < 50; ++trial) {
      SaliencyMap s{28, 28, std::vector<double>(784), false};
      for (double& v : s.values) v = rng.uniform(-3.0, 3.0);
      const auto norm = softmax_normalize(s);
      const auto mask = sample_patch_mask(grid, rng.uniform01(), rng);
      const double inv = inverse_patch_selectivity(norm, mask);
      CHECK(inv >= 0.0);
      CHECK(inv <= 1.0 + 1e-12);
      CHECK(49.0 * patch_selectivity(norm, mask) + inv == doctest::Approx(1.0));
    }
  }

  TEST_CASE("raw map round trip and heatmap") {
    fx::TempDir tmp("raw");
    SaliencyMap s{3, 4, {0.5, -1.25, 2.0, 0.0, 1.0, 3.0, -2.0, 0.25, 4.0, 1.5, 0.75, -0.5}, false};
    write_raw_map(tmp / "s.f32", s);
    CHECK(std::filesystem::file_size(tmp / "s.f32") == 48);
    const auto back = read_raw_map(tmp / "s.f32", 3, 4);
    CHECK(back.values == s.values);
    CHECK_THROWS_AS(read_raw_map(tmp / "s.f32", 4, 4), IoError);
    CHECK(s.argmax() == 8);
    const auto heat = render_heatmap(ImageTensor(3, 4, 3, 0.5f), s);
    CHECK(heat.channels() == 3);
    CHECK(heat.height() == 3);
  }
}
