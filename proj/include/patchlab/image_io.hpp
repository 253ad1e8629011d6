#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "patchlab/image.hpp"

namespace patchlab {

/// Decodes PNG or JPEG. Gray files load as 1 channel, RGB as 3 and RGBA as
/// 4 (channel order R, G, B, A). 8-bit samples are divided by 255, 16-bit
/// samples by 65535.
ImageTensor read_image(const std::filesystem::path& path);
ImageTensor decode_image(const std::vector<std::uint8_t>& bytes);

/// 8-bit PNG; each sample is quantized as floor(255 * s + 0.5).
std::vector<std::uint8_t> encode_png(const ImageTensor& img);
void write_png(const std::filesystem::path& path, const ImageTensor& img);

std::uint8_t quantize_sample(float s);

/// Sorted list of *.png / *.jpg / *.jpeg files directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace patchlab
