#include "patchlab/smd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/image_io.hpp"
#include "patchlab/rng.hpp"

namespace patchlab {

using nlohmann::json;

void OccluderSprite::validate() const {
  if (image.channels() != 4) {
    throw ContractError("sprite " + source_id + " must be RGBA");
  }
  const auto d = image.data();
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    if (d[p * 4 + 3] > 0.0f) return;
  }
  throw ContractError("sprite " + source_id + " has no opaque pixel");
}

SpriteLibrary SpriteLibrary::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("sprite library is not a directory: " + dir.string());
  }
  SpriteLibrary lib;
  std::vector<std::filesystem::path> categories;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_directory()) categories.push_back(e.path());
  }
  std::sort(categories.begin(), categories.end());
  for (const auto& cat_dir : categories) {
    const std::string category = cat_dir.filename().string();
    for (const auto& file : list_images(cat_dir)) {
      if (file.extension() != ".png") continue;
      OccluderSprite s{read_image(file), category,
                       category + "/" + file.stem().string()};
      s.validate();
      lib.by_category[category].push_back(std::move(s));
    }
  }
  return lib;
}

const OccluderSprite& SpriteLibrary::find(const std::string& source_id) const {
  const auto slash = source_id.find('/');
  const auto it = by_category.find(source_id.substr(0, slash));
  if (it != by_category.end()) {
    for (const auto& s : it->second) {
      if (s.source_id == source_id) return s;
    }
  }
  throw IoError("sprite '" + source_id + "' not in library");
}

void SmdConfig::validate() const {
  if (!(tolerance >= 0.0)) throw ContractError("SMD tolerance must be >= 0");
  if (!(scale_min > 0.0 && scale_min <= scale_max)) {
    throw ContractError("SMD scale range must satisfy 0 < min <= max");
  }
  if (max_attempts == 0) throw ContractError("SMD max_attempts must be >= 1");
}

json OcclusionManifest::to_json() const {
  json placements_json = json::array();
  for (const auto& p : placements) {
    placements_json.push_back({{"sprite_id", p.sprite_id},
                               {"rotation_degrees", p.rotation_degrees},
                               {"scale", p.scale},
                               {"center_xy", {p.center_x, p.center_y}},
                               {"offset_xy", {p.left, p.top}},
                               {"area", p.mask.popcount()},
                               {"mask", p.mask.to_json()}});
  }
  return {{"source_image", source_image},
          {"height", height},
          {"width", width},
          {"target_fraction", target_fraction},
          {"achieved_fraction", achieved_fraction},
          {"tolerance", tolerance},
          {"overlap_allowed", overlap_allowed},
          {"occluder_category", occluder_category},
          {"rng", {{"algorithm", SeededRandomSource::kAlgorithm}, {"seed", seed}}},
          {"placements", placements_json},
          {"union_mask", union_mask.to_json()}};
}

OcclusionManifest OcclusionManifest::from_json(const json& j) {
  OcclusionManifest m;
  m.source_image = j.at("source_image").get<std::string>();
  m.height = j.at("height").get<std::size_t>();
  m.width = j.at("width").get<std::size_t>();
  m.target_fraction = j.at("target_fraction").get<double>();
  m.achieved_fraction = j.at("achieved_fraction").get<double>();
  m.tolerance = j.at("tolerance").get<double>();
  m.overlap_allowed = j.at("overlap_allowed").get<bool>();
  m.occluder_category = j.at("occluder_category").get<std::string>();
  m.seed = j.at("rng").at("seed").get<std::uint64_t>();
  for (const auto& pj : j.at("placements")) {
    Placement p;
    p.sprite_id = pj.at("sprite_id").get<std::string>();
    p.rotation_degrees = pj.at("rotation_degrees").get<double>();
    p.scale = pj.at("scale").get<double>();
    p.center_x = pj.at("center_xy").at(0).get<double>();
    p.center_y = pj.at("center_xy").at(1).get<double>();
    p.left = pj.at("offset_xy").at(0).get<std::size_t>();
    p.top = pj.at("offset_xy").at(1).get<std::size_t>();
    p.mask = RleMask::from_json(pj.at("mask"));
    m.placements.push_back(std::move(p));
  }
  m.union_mask = RleMask::from_json(j.at("union_mask"));
  return m;
}

RenderedSprite render_sprite(const OccluderSprite& sprite, double rotation_degrees,
                             double target_extent, float alpha_threshold) {
  const ImageTensor& src = sprite.image;
  const auto h0 = static_cast<double>(src.height());
  const auto w0 = static_cast<double>(src.width());
  const double f = target_extent / std::max(h0, w0);
  const double theta = rotation_degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double out_w = std::abs(w0 * f * cs) + std::abs(h0 * f * sn);
  const double out_h = std::abs(w0 * f * sn) + std::abs(h0 * f * cs);
  const auto cw = static_cast<std::size_t>(std::ceil(out_w)) + 2;
  const auto ch = static_cast<std::size_t>(std::ceil(out_h)) + 2;

  const auto d = src.data();
  const auto px = [&](std::ptrdiff_t r, std::ptrdiff_t c, std::size_t k) -> double {
    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(src.height()) ||
        c >= static_cast<std::ptrdiff_t>(src.width())) {
      return 0.0;
    }
    return d[(static_cast<std::size_t>(r) * src.width() + static_cast<std::size_t>(c)) * 4 + k];
  };

  // Premultiplied RGBA on the full canvas.
  std::vector<double> canvas(ch * cw * 4, 0.0);
  for (std::size_t v = 0; v < ch; ++v) {
    for (std::size_t u = 0; u < cw; ++u) {
      const double dx = static_cast<double>(u) + 0.5 - static_cast<double>(cw) / 2.0;
      const double dy = static_cast<double>(v) + 0.5 - static_cast<double>(ch) / 2.0;
      const double sx = (cs * dx + sn * dy) / f + w0 / 2.0 - 0.5;
      const double sy = (-sn * dx + cs * dy) / f + h0 / 2.0 - 0.5;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const auto c0 = static_cast<std::ptrdiff_t>(fx);
      const auto r0 = static_cast<std::ptrdiff_t>(fy);
      double acc[4] = {0.0, 0.0, 0.0, 0.0};
      const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      const std::ptrdiff_t rr[4] = {r0, r0, r0 + 1, r0 + 1};
      const std::ptrdiff_t cc[4] = {c0, c0 + 1, c0, c0 + 1};
      for (int t = 0; t < 4; ++t) {
        if (wts[t] == 0.0) continue;
        const double a = px(rr[t], cc[t], 3);
        if (a == 0.0) continue;
        acc[3] += wts[t] * a;
        for (std::size_t k = 0; k < 3; ++k) acc[k] += wts[t] * a * px(rr[t], cc[t], k);
      }
      std::copy(acc, acc + 4, canvas.begin() + static_cast<std::ptrdiff_t>((v * cw + u) * 4));
    }
  }

  // Tight crop to every pixel the sprite touches.
  std::size_t top = ch, bottom = 0, left = cw, right = 0;
  for (std::size_t v = 0; v < ch; ++v) {
    for (std::size_t u = 0; u < cw; ++u) {
      if (canvas[(v * cw + u) * 4 + 3] > 0.0) {
        top = std::min(top, v);
        bottom = std::max(bottom, v + 1);
        left = std::min(left, u);
        right = std::max(right, u + 1);
      }
    }
  }
  RenderedSprite out;
  if (top >= bottom) return out;
  out.height = bottom - top;
  out.width = right - left;
  out.rgb.resize(out.height * out.width * 3);
  out.alpha.resize(out.height * out.width);
  out.occluded.resize(out.height * out.width);
  for (std::size_t v = 0; v < out.height; ++v) {
    for (std::size_t u = 0; u < out.width; ++u) {
      const double* c = &canvas[((v + top) * cw + (u + left)) * 4];
      const std::size_t i = v * out.width + u;
      const double a = std::min(c[3], 1.0);
      out.alpha[i] = static_cast<float>(a);
      out.occluded[i] = out.alpha[i] >= alpha_threshold ? 1 : 0;
      for (std::size_t k = 0; k < 3; ++k) {
        out.rgb[i * 3 + k] =
            a > 0.0 ? static_cast<float>(std::clamp(c[k] / c[3], 0.0, 1.0)) : 0.0f;
      }
    }
  }
  return out;
}

namespace {

void composite(ImageTensor& img, const RenderedSprite& r, std::size_t top,
               std::size_t left) {
  auto d = img.mutable_data();
  const std::size_t c = img.channels();
  for (std::size_t v = 0; v < r.height; ++v) {
    for (std::size_t u = 0; u < r.width; ++u) {
      const std::size_t i = v * r.width + u;
      const float a = r.alpha[i];
      if (a <= 0.0f) continue;
      float* px = &d[((top + v) * img.width() + left + u) * c];
      if (c == 1) {
        const float gray = (r.rgb[i * 3] + r.rgb[i * 3 + 1] + r.rgb[i * 3 + 2]) / 3.0f;
        px[0] = std::clamp(a * gray + (1.0f - a) * px[0], 0.0f, 1.0f);
      } else {
        for (std::size_t k = 0; k < 3; ++k) {
          px[k] = std::clamp(a * r.rgb[i * 3 + k] + (1.0f - a) * px[k], 0.0f, 1.0f);
        }
      }
    }
  }
}

std::size_t overlap_with(const std::vector<std::uint8_t>& union_bits, std::size_t width,
                         const RenderedSprite& r, std::size_t top, std::size_t left,
                         std::size_t& area) {
  std::size_t overlap = 0;
  area = 0;
  for (std::size_t v = 0; v < r.height; ++v) {
    for (std::size_t u = 0; u < r.width; ++u) {
      if (!r.occluded[v * r.width + u]) continue;
      ++area;
      if (union_bits[(top + v) * width + left + u]) ++overlap;
    }
  }
  return overlap;
}

}  // namespace

PlacementResult place_occluders(const ImageTensor& x,
                                std::span<const OccluderSprite> sprites, double target,
                                const SmdConfig& cfg, SeededRandomSource& rng) {
  cfg.validate();
  if (!(target >= 0.0 && target <= 1.0)) throw ContractError("SMD target outside [0, 1]");
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  const double total = static_cast<double>(h * w);

  PlacementResult result{x, {}};
  OcclusionManifest& m = result.manifest;
  m.height = h;
  m.width = w;
  m.target_fraction = target;
  m.tolerance = cfg.tolerance;
  m.overlap_allowed = target > cfg.overlap_threshold;
  m.seed = rng.seed();
  std::vector<std::uint8_t> union_bits(h * w, 0);
  std::size_t covered = 0;

  if (target > 0.0) {
    if (sprites.empty()) throw ContractError("SMD: no sprites to place");
    m.occluder_category = sprites.front().category;
    for (const auto& s : sprites) {
      if (s.category != m.occluder_category) {
        throw ContractError("SMD: sprites of one placement must share a category");
      }
    }
    const double lo = (target - cfg.tolerance) * total;
    const double hi = (target + cfg.tolerance) * total;
    const double min_dim = static_cast<double>(std::min(h, w));
    for (std::size_t attempt = 0;
         attempt < cfg.max_attempts && static_cast<double>(covered) < lo; ++attempt) {
      const OccluderSprite& sprite = sprites[rng.uniform_index(sprites.size())];
      const double rotation = cfg.rotate ? rng.uniform(0.0, 360.0) : 0.0;
      const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
      RenderedSprite r =
          render_sprite(sprite, rotation, scale * min_dim, cfg.alpha_threshold);
      if (r.height == 0 || r.height > h || r.width > w) continue;
      const std::size_t top = rng.uniform_index(h - r.height + 1);
      const std::size_t left = rng.uniform_index(w - r.width + 1);
      std::size_t area = 0;
      const std::size_t overlap = overlap_with(union_bits, w, r, top, left, area);
      if (area == 0) continue;
      if (!m.overlap_allowed && overlap > 0) continue;
      if (static_cast<double>(covered + area - overlap) > hi) continue;

      composite(result.image, r, top, left);
      for (std::size_t v = 0; v < r.height; ++v) {
        for (std::size_t u = 0; u < r.width; ++u) {
          if (r.occluded[v * r.width + u]) union_bits[(top + v) * w + left + u] = 1;
        }
      }
      covered += area - overlap;
      Placement p;
      p.sprite_id = sprite.source_id;
      p.rotation_degrees = rotation;
      p.scale = scale;
      p.left = left;
      p.top = top;
      p.center_x = static_cast<double>(left) + static_cast<double>(r.width) / 2.0;
      p.center_y = static_cast<double>(top) + static_cast<double>(r.height) / 2.0;
      p.mask = RleMask::encode(r.height, r.width, r.occluded);
      m.placements.push_back(std::move(p));
    }
    if (static_cast<double>(covered) < lo) {
      const double best = static_cast<double>(covered) / total;
      throw GenerationError("SMD: reached occlusion " + std::to_string(best) +
                                " of target " + std::to_string(target) + " after " +
                                std::to_string(cfg.max_attempts) + " attempts",
                            best);
    }
  }
  m.union_mask = RleMask::encode(h, w, union_bits);
  m.achieved_fraction = static_cast<double>(m.union_mask.popcount()) / total;
  return result;
}

ImageTensor replay_manifest(const ImageTensor& x, const SpriteLibrary& library,
                            const OcclusionManifest& manifest, float alpha_threshold,
                            std::vector<std::vector<std::uint8_t>>* instance_masks) {
  if (x.height() != manifest.height || x.width() != manifest.width) {
    throw ShapeError("replay: image size differs from the manifest");
  }
  ImageTensor out = x;
  const double min_dim = static_cast<double>(std::min(x.height(), x.width()));
  if (instance_masks) instance_masks->clear();
  for (const auto& p : manifest.placements) {
    const RenderedSprite r = render_sprite(library.find(p.sprite_id), p.rotation_degrees,
                                           p.scale * min_dim, alpha_threshold);
    if (p.top + r.height > x.height() || p.left + r.width > x.width()) {
      throw ContractError("replay: placement of " + p.sprite_id + " leaves the image");
    }
    composite(out, r, p.top, p.left);
    if (instance_masks) {
      std::vector<std::uint8_t> full(x.pixel_count(), 0);
      for (std::size_t v = 0; v < r.height; ++v) {
        for (std::size_t u = 0; u < r.width; ++u) {
          full[(p.top + v) * x.width() + p.left + u] = r.occluded[v * r.width + u];
        }
      }
      instance_masks->push_back(std::move(full));
    }
  }
  return out;
}

json SmdIndexRecord::to_json() const {
  json j = {{"image_id", image_id}, {"target", target}, {"ok", ok}};
  if (ok) {
    j["output"] = output;
    j["manifest"] = manifest;
    j["occluder_category"] = occluder_category;
    j["achieved_fraction"] = achieved_fraction;
  } else {
    j["error"] = error;
    j["achieved_fraction"] = achieved_fraction;
  }
  return j;
}

namespace {

std::string target_dir_name(double target) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "target_" << target;
  return os.str();
}

}  // namespace

std::vector<SmdIndexRecord> generate_smd(const std::filesystem::path& image_dir,
                                         const SpriteLibrary& library,
                                         std::span<const double> targets,
                                         std::uint64_t seed,
                                         const std::filesystem::path& out_dir,
                                         const SmdConfig& cfg) {
  cfg.validate();
  if (library.empty()) throw ContractError("SMD: sprite library is empty");
  std::vector<std::string> categories;
  for (const auto& [name, _] : library.by_category) categories.push_back(name);

  std::filesystem::create_directories(out_dir);
  std::vector<SmdIndexRecord> records;
  const SeededRandomSource root(seed);
  for (const auto& path : list_images(image_dir)) {
    const std::string id = path.stem().string();
    const ImageTensor img = read_image(path);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      SmdIndexRecord rec;
      rec.image_id = id;
      rec.target = targets[t];
      SeededRandomSource rng = root.derive(id).derive(std::uint64_t{t});
      try {
        const auto& sprites = library.by_category.at(
            categories[rng.uniform_index(categories.size())]);
        PlacementResult r = place_occluders(img, sprites, targets[t], cfg, rng);
        r.manifest.source_image = path.filename().string();
        const std::filesystem::path dir = out_dir / target_dir_name(targets[t]);
        const std::filesystem::path png = dir / "images" / (id + ".png");
        const std::filesystem::path man = dir / "manifests" / (id + ".json");
        write_png(png, r.image);
        const std::string text = r.manifest.to_json().dump(2) + "\n";
        write_file(man, std::vector<std::uint8_t>(text.begin(), text.end()));
        rec.ok = true;
        rec.output = std::filesystem::relative(png, out_dir).generic_string();
        rec.manifest = std::filesystem::relative(man, out_dir).generic_string();
        rec.occluder_category = r.manifest.occluder_category;
        rec.achieved_fraction = r.manifest.achieved_fraction;
      } catch (const GenerationError& e) {
        rec.error = e.what();
        rec.achieved_fraction = e.best_fraction();
      } catch (const ContractError& e) {
        rec.error = e.what();
      }
      records.push_back(std::move(rec));
    }
  }
  std::ofstream index(out_dir / "index.jsonl", std::ios::trunc);
  if (!index) throw IoError("cannot write " + (out_dir / "index.jsonl").string());
  for (const auto& r : records) index << r.to_json().dump() << '\n';
  return records;
}

}  // namespace patchlab
