#pragma once

#include <cstddef>
#include <vector>

#include "scigs/error.hpp"

namespace scigs {

/// Dense row-major, channel-interleaved image of doubles.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
    require(h >= 0 && w >= 0 && c >= 0, "image dimensions must be non-negative");
  }

  std::size_t size() const { return data.size(); }
  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

  bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }
  bool operator==(const Image& o) const = default;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  require(a.same_shape(b), what);
}

}  // namespace scigs
