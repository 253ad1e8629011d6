#include "patchlab/image.hpp"

#include <string>

#include "patchlab/error.hpp"

namespace patchlab {
namespace {

void check_channels(std::size_t channels) {
  if (channels != 1 && channels != 3 && channels != 4) {
    throw ShapeError("ImageTensor: channels must be 1, 3 or 4, got " +
                     std::to_string(channels));
  }
}

}  // namespace

ImageTensor::ImageTensor(std::size_t height, std::size_t width,
                         std::size_t channels)
    : ImageTensor(height, width, channels, 0.0f) {}

ImageTensor::ImageTensor(std::size_t height, std::size_t width,
                         std::size_t channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_channels(channels);
  if (!(fill >= 0.0f && fill <= 1.0f)) {
    throw ContractError("ImageTensor: fill outside [0, 1]");
  }
  data_.assign(height * width * channels, fill);
}

ImageTensor::ImageTensor(std::size_t height, std::size_t width,
                         std::size_t channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_channels(channels);
  if (data_.size() != height * width * channels) {
    throw ShapeError("ImageTensor: data length " + std::to_string(data_.size()) +
                     " != " + std::to_string(height) + "x" + std::to_string(width) +
                     "x" + std::to_string(channels));
  }
  for (float s : data_) {
    if (!(s >= 0.0f && s <= 1.0f)) {
      throw ContractError("ImageTensor: sample outside [0, 1]");
    }
  }
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                        const char* context) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(context) + ": shape mismatch " +
                     std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     "x" + std::to_string(a.channels()) + " vs " +
                     std::to_string(b.height()) + "x" + std::to_string(b.width()) +
                     "x" + std::to_string(b.channels()));
  }
}

}  // namespace patchlab
