#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace patchlab::base64 {

/// RFC 4648 standard alphabet with '=' padding.
std::string encode(std::span<const std::uint8_t> bytes);
/// Throws ProtocolError on malformed input.
std::vector<std::uint8_t> decode(std::string_view text);

/// Little-endian IEEE-754 binary32 payload, as used on the oracle wire.
std::string encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::string_view text);

}  // namespace patchlab::base64
