#include "patchlab/rle.hpp"

#include <string>

#include "patchlab/error.hpp"

namespace patchlab {

RleMask RleMask::encode(std::size_t height, std::size_t width,
                        std::span<const std::uint8_t> bits) {
  if (bits.size() != height * width) throw ShapeError("RLE: bitmap size mismatch");
  RleMask m{height, width, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t b : bits) {
    const std::uint8_t v = b ? 1 : 0;
    if (v != current) {
      m.counts.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  m.counts.push_back(run);
  return m;
}

std::vector<std::uint8_t> RleMask::decode() const {
  std::vector<std::uint8_t> out;
  out.reserve(height * width);
  std::uint8_t v = 0;
  for (std::uint32_t run : counts) {
    out.insert(out.end(), run, v);
    v ^= 1;
  }
  if (out.size() != height * width) {
    throw ShapeError("RLE: runs cover " + std::to_string(out.size()) + " pixels, expected " +
                     std::to_string(height * width));
  }
  return out;
}

std::size_t RleMask::popcount() const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < counts.size(); i += 2) n += counts[i];
  return n;
}

nlohmann::json RleMask::to_json() const {
  return {{"encoding", "rle-rowmajor-v1"},
          {"height", height},
          {"width", width},
          {"counts", counts}};
}

RleMask RleMask::from_json(const nlohmann::json& j) {
  if (j.value("encoding", std::string("rle-rowmajor-v1")) != "rle-rowmajor-v1") {
    throw ContractError("unsupported mask encoding " + j["encoding"].dump());
  }
  RleMask m{j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
            j.at("counts").get<std::vector<std::uint32_t>>()};
  return m;
}

}  // namespace patchlab
