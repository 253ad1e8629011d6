#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <span>
#include <vector>

namespace patchlab {

/// Row-major run-length encoded binary bitmap. Runs alternate starting with
/// a (possibly empty) run of zeros.
struct RleMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> counts;

  static RleMask encode(std::size_t height, std::size_t width,
                        std::span<const std::uint8_t> bits);
  std::vector<std::uint8_t> decode() const;
  std::size_t popcount() const;

  nlohmann::json to_json() const;
  static RleMask from_json(const nlohmann::json& j);

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

}  // namespace patchlab
