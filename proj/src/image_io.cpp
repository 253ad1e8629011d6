#include "patchlab/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <string>

#include "patchlab/error.hpp"

namespace patchlab {
namespace {

// OpenCV stores colour as BGR(A); tensors are RGB(A).
std::size_t swap_rb(std::size_t channel, std::size_t channels) {
  if (channels >= 3 && channel < 3) return 2 - channel;
  return channel;
}

ImageTensor from_mat(const cv::Mat& mat, const std::string& what) {
  if (mat.empty()) throw IoError("cannot decode image: " + what);
  const auto channels = static_cast<std::size_t>(mat.channels());
  if (channels != 1 && channels != 3 && channels != 4) {
    throw IoError("unsupported channel count " + std::to_string(channels) +
                  " in " + what);
  }
  double scale = 0.0;
  if (mat.depth() == CV_8U) {
    scale = 255.0;
  } else if (mat.depth() == CV_16U) {
    scale = 65535.0;
  } else {
    throw IoError("unsupported sample depth in " + what);
  }
  const auto h = static_cast<std::size_t>(mat.rows);
  const auto w = static_cast<std::size_t>(mat.cols);
  std::vector<float> data(h * w * channels);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t src = c * channels + swap_rb(ch, channels);
        const double v = mat.depth() == CV_8U
                             ? mat.ptr<std::uint8_t>(static_cast<int>(r))[src]
                             : mat.ptr<std::uint16_t>(static_cast<int>(r))[src];
        data[(r * w + c) * channels + ch] = static_cast<float>(v / scale);
      }
    }
  }
  return ImageTensor(h, w, channels, std::move(data));
}

cv::Mat to_mat(const ImageTensor& img) {
  const auto channels = img.channels();
  cv::Mat mat(static_cast<int>(img.height()), static_cast<int>(img.width()),
              CV_MAKETYPE(CV_8U, static_cast<int>(channels)));
  const auto src = img.data();
  for (std::size_t r = 0; r < img.height(); ++r) {
    auto* row = mat.ptr<std::uint8_t>(static_cast<int>(r));
    for (std::size_t c = 0; c < img.width(); ++c) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        row[c * channels + swap_rb(ch, channels)] =
            quantize_sample(src[(r * img.width() + c) * channels + ch]);
      }
    }
  }
  return mat;
}

}  // namespace

std::uint8_t quantize_sample(float s) {
  const double v = std::floor(static_cast<double>(s) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

ImageTensor read_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError("no such image: " + path.string());
  }
  return from_mat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), path.string());
}

ImageTensor decode_image(const std::vector<std::uint8_t>& bytes) {
  return from_mat(cv::imdecode(bytes, cv::IMREAD_UNCHANGED), "<memory>");
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_mat(img), out)) {
    throw IoError("PNG encoding failed");
  }
  return out;
}

void write_png(const std::filesystem::path& path, const ImageTensor& img) {
  write_file(path, encode_png(img));
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace patchlab
