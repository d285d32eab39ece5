#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cgsplat/errors.hpp"

namespace cgsplat {

// Dense row-major image of doubles, 1 or 3 channels, values nominally [0,1]
// for color and scene units for depth.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0)
      : height_(height),
        width_(width),
        channels_(channels),
        data_(static_cast<size_t>(height) * width * channels, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  double& at(int y, int x, int c = 0) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c = 0) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  Eigen::Vector3d rgb(int y, int x) const {
    const size_t i = (static_cast<size_t>(y) * width_ + x) * channels_;
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set_rgb(int y, int x, const Eigen::Vector3d& v) {
    const size_t i = (static_cast<size_t>(y) * width_ + x) * channels_;
    data_[i] = v.x();
    data_[i + 1] = v.y();
    data_[i + 2] = v.z();
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  // Channel mean, used for grayscale conversion. Returns *this if already
  // single-channel.
  Image to_gray() const;

  Image clamped(double lo = 0.0, double hi = 1.0) const;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// 8-bit PNG color I/O. Values are clamped to [0,1] and quantized on write.
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

// Depth I/O. The .bin form is authoritative for the pipeline: a little-endian
// float32 raster preceded by int32 height and width. The 16-bit PNG form is
// for visualization and carries its quantization scale in a sidecar file
// (path + ".scale.txt").
void write_depth_bin(const Image& depth, const std::string& path);
Image read_depth_bin(const std::string& path);
void write_depth_png16(const Image& depth, const std::string& path);
Image read_depth_png16(const std::string& path);

}  // namespace cgsplat
