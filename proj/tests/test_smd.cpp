#include <doctest.h>

#include <algorithm>
#include <json.hpp>
#include <vector>

#include "fixtures.hpp"
#include "patchlab/error.hpp"
#include "patchlab/image_io.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/smd.hpp"

using namespace patchlab;
namespace fx = patchlab::fixtures;

namespace {

std::vector<OccluderSprite> blobs(const std::string& category) {
  return {fx::blob_sprite(category, "a", 24, 24, 1), fx::blob_sprite(category, "b", 16, 32, 2),
          fx::blob_sprite(category, "c", 30, 20, 3)};
}

}  // namespace

TEST_SUITE("smd") {
  TEST_CASE("sprite validation") {
    CHECK_NOTHROW(fx::blob_sprite("cat", "a", 10, 10, 1).validate());
    OccluderSprite rgb{ImageTensor(4, 4, 3, 1.0f), "cat", "cat/rgb"};
    CHECK_THROWS_AS(rgb.validate(), ContractError);
    OccluderSprite clear{ImageTensor(4, 4, 4, 0.0f), "cat", "cat/clear"};
    CHECK_THROWS_AS(clear.validate(), ContractError);
  }

  TEST_CASE("upright render keeps the longer side") {
    const auto sprite = fx::blob_sprite("cat", "a", 16, 32, 4);
    const auto r = render_sprite(sprite, 0.0, 16.0, 0.5f);
    CHECK(r.width == doctest::Approx(16).epsilon(0.15));
    CHECK(r.height <= r.width);
    CHECK(r.alpha.size() == r.height * r.width);
    for (std::size_t i = 0; i < r.alpha.size(); ++i) {
      CHECK(static_cast<bool>(r.occluded[i]) == (r.alpha[i] >= 0.5f));
    }
  }

  TEST_CASE("placement reaches the target within tolerance") {
    const auto x = fx::random_image(64, 64, 3, 3);
    const auto sprites = blobs("cat");
    SmdConfig cfg;
    for (double target : {0.1, 0.3, 0.5}) {
      SeededRandomSource rng(11);
      const auto r = place_occluders(x, sprites, target, cfg, rng);
      CHECK(std::abs(r.manifest.achieved_fraction - target) <= cfg.tolerance);
      CHECK(r.manifest.overlap_allowed == (target > cfg.overlap_threshold));
      CHECK(r.manifest.union_mask.popcount() ==
            static_cast<std::size_t>(r.manifest.achieved_fraction * 64 * 64 + 0.5));
      CHECK_FALSE(r.manifest.placements.empty());
    }
  }

  TEST_CASE("zero target leaves the image alone") {
    const auto x = fx::random_image(32, 32, 3, 3);
    SeededRandomSource rng(1);
    const auto r = place_occluders(x, blobs("cat"), 0.0, SmdConfig{}, rng);
    CHECK(r.image == x);
    CHECK(r.manifest.placements.empty());
    CHECK(r.manifest.achieved_fraction == 0.0);
  }

  TEST_CASE("unreachable target raises with the best fraction") {
    const auto x = fx::random_image(64, 64, 3, 3);
    SmdConfig cfg;
    cfg.max_attempts = 1;
    SeededRandomSource rng(2);
    try {
      place_occluders(x, blobs("cat"), 0.9, cfg, rng);
      FAIL("expected GenerationError");
    } catch (const GenerationError& e) {
      CHECK(e.best_fraction() < 0.89);
    }
  }

  TEST_CASE("argument checks") {
    const auto x = fx::random_image(32, 32, 3, 3);
    SeededRandomSource rng(2);
    CHECK_THROWS_AS(place_occluders(x, blobs("cat"), 1.5, SmdConfig{}, rng), ContractError);
    CHECK_THROWS_AS(place_occluders(x, {}, 0.2, SmdConfig{}, rng), ContractError);
    auto mixed = blobs("cat");
    mixed.push_back(fx::blob_sprite("dog", "a", 10, 10, 9));
    CHECK_THROWS_AS(place_occluders(x, mixed, 0.2, SmdConfig{}, rng), ContractError);
    SmdConfig bad;
    bad.scale_min = 0.5;
    bad.scale_max = 0.2;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }

  TEST_CASE("manifest round trip replays the same pixels") {
    fx::TempDir tmp("smd");
    fx::write_blob_library(tmp / "sprites", {"cat", "dog"});
    const auto library = SpriteLibrary::load(tmp / "sprites");
    REQUIRE(library.by_category.size() == 2);
    const auto x = fx::random_image(64, 64, 3, 5);
    SeededRandomSource rng(8);
    const auto r = place_occluders(x, library.by_category.at("dog"), 0.2, SmdConfig{}, rng);
    const auto copy = OcclusionManifest::from_json(nlohmann::json::parse(r.manifest.to_json().dump()));
    CHECK(copy.placements.size() == r.manifest.placements.size());
    CHECK(copy.union_mask == r.manifest.union_mask);
    const auto replayed = replay_manifest(x, library, copy, SmdConfig{}.alpha_threshold);
    CHECK(encode_png(replayed) == encode_png(r.image));
    CHECK_THROWS_AS(library.find("dog/missing"), IoError);
  }

  TEST_CASE("generation writes every record to the index") {
    fx::TempDir tmp("smdgen");
    fx::write_blob_library(tmp / "sprites", {"cat"});
    std::filesystem::create_directories(tmp / "images");
    for (int i = 0; i < 3; ++i) {
      write_png(tmp / "images" / ("img" + std::to_string(i) + ".png"),
                fx::random_image(64, 64, 3, static_cast<std::uint64_t>(i)));
    }
    const auto library = SpriteLibrary::load(tmp / "sprites");
    const std::vector<double> targets{0.1, 0.3};
    const auto records = generate_smd(tmp / "images", library, targets, 4, tmp / "out", SmdConfig{});
    CHECK(records.size() == 6);
    const auto index = fx::read_text(tmp / "out" / "index.jsonl");
    CHECK(std::count(index.begin(), index.end(), '\n') == 6);
    for (const auto& rec : records) {
      REQUIRE(rec.ok);
      CHECK(std::filesystem::exists(tmp / "out" / rec.output));
      CHECK(std::filesystem::exists(tmp / "out" / rec.manifest));
    }
    CHECK(std::filesystem::exists(tmp / "out" / "target_0.10" / "images" / "img0.png"));
    // Same seed, same bytes.
    generate_smd(tmp / "images", library, targets, 4, tmp / "again", SmdConfig{});
    CHECK(fx::read_text(tmp / "out" / records[3].output) ==
          fx::read_text(tmp / "again" / records[3].output));
  }
}
