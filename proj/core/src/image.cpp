#include "cgsplat/image.hpp"

#include <algorithm>

namespace cgsplat {

Image Image::to_gray() const {
  if (channels_ == 1) return *this;
  Image out(height_, width_, 1);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      double s = 0.0;
      for (int c = 0; c < channels_; ++c) s += at(y, x, c);
      out.at(y, x) = s / channels_;
    }
  }
  return out;
}

Image Image::clamped(double lo, double hi) const {
  Image out = *this;
  for (size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::clamp(out.data()[i], lo, hi);
  }
  return out;
}

}  // namespace cgsplat
