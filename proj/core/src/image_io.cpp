#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cgsplat/image.hpp"

namespace cgsplat {

namespace {

uint8_t to_u8(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png(const Image& img, const std::string& path) {
  if (img.empty()) throw ContractViolation("write_png: empty image");
  const int ch = img.channels();
  cv::Mat mat(img.height(), img.width(), ch == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (ch == 1) {
        mat.at<uint8_t>(y, x) = to_u8(img.at(y, x));
      } else {
        // OpenCV stores BGR.
        mat.at<cv::Vec3b>(y, x) =
            cv::Vec3b(to_u8(img.at(y, x, 2)), to_u8(img.at(y, x, 1)),
                      to_u8(img.at(y, x, 0)));
      }
    }
  }
  if (!cv::imwrite(path, mat)) throw IoError("cannot write PNG: " + path);
}

Image read_png(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError("cannot read PNG: " + path);
  if (mat.depth() != CV_8U) throw IoError("expected 8-bit PNG: " + path);
  const int ch = mat.channels() >= 3 ? 3 : 1;
  Image img(mat.rows, mat.cols, ch);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      if (ch == 1) {
        img.at(y, x) = mat.at<uint8_t>(y, x) / 255.0;
      } else if (mat.channels() == 3) {
        const cv::Vec3b px = mat.at<cv::Vec3b>(y, x);
        img.set_rgb(y, x, {px[2] / 255.0, px[1] / 255.0, px[0] / 255.0});
      } else {
        const cv::Vec4b px = mat.at<cv::Vec4b>(y, x);
        img.set_rgb(y, x, {px[2] / 255.0, px[1] / 255.0, px[0] / 255.0});
      }
    }
  }
  return img;
}

void write_depth_bin(const Image& depth, const std::string& path) {
  if (depth.channels() != 1) {
    throw ContractViolation("write_depth_bin: depth must be single-channel");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write depth file: " + path);
  const int32_t h = depth.height();
  const int32_t w = depth.width();
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  std::vector<float> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[x] = static_cast<float>(depth.at(y, x));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on depth file: " + path);
}

Image read_depth_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read depth file: " + path);
  int32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  in.read(reinterpret_cast<char*>(&w), sizeof(w));
  if (!in || h <= 0 || w <= 0 || h > 1 << 16 || w > 1 << 16) {
    throw IoError("malformed depth header: " + path);
  }
  Image depth(h, w, 1);
  std::vector<float> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw IoError("truncated depth file: " + path);
    for (int x = 0; x < w; ++x) depth.at(y, x) = row[x];
  }
  return depth;
}

void write_depth_png16(const Image& depth, const std::string& path) {
  if (depth.channels() != 1) {
    throw ContractViolation("write_depth_png16: depth must be single-channel");
  }
  double max_d = 0.0;
  for (size_t i = 0; i < depth.size(); ++i) {
    max_d = std::max(max_d, depth.data()[i]);
  }
  const double scale = max_d > 0.0 ? 65535.0 / max_d : 1.0;
  cv::Mat mat(depth.height(), depth.width(), CV_16UC1);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double v = std::clamp(depth.at(y, x) * scale, 0.0, 65535.0);
      mat.at<uint16_t>(y, x) = static_cast<uint16_t>(std::lround(v));
    }
  }
  if (!cv::imwrite(path, mat)) throw IoError("cannot write PNG: " + path);
  std::ofstream side(path + ".scale.txt");
  side.precision(17);
  side << scale << "\n";
}

Image read_depth_png16(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (mat.empty() || mat.type() != CV_16UC1) {
    throw IoError("cannot read 16-bit depth PNG: " + path);
  }
  std::ifstream side(path + ".scale.txt");
  double scale = 1.0;
  if (!(side >> scale) || !(scale > 0.0)) {
    throw IoError("missing or bad depth scale sidecar for: " + path);
  }
  Image depth(mat.rows, mat.cols, 1);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      depth.at(y, x) = mat.at<uint16_t>(y, x) / scale;
    }
  }
  return depth;
}

}  // namespace cgsplat
