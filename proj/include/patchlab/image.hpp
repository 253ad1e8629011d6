#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace patchlab {

/// H x W x C image, row-major interleaved, samples in [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Zero-filled image. Channels must be 1, 3 or 4.
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels);
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
              float fill);
  /// Takes ownership of `data`; validates length and range.
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
              std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> mutable_data() noexcept { return data_; }

  float at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  float& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

/// Throws ShapeError unless both images have identical dimensions.
void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                        const char* context);

}  // namespace patchlab
