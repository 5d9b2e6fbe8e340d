#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "icogs/common.hpp"

namespace icogs {

/// Dense H x W x C grid of doubles, row-major, channel-fastest.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  size_t index(int x, int y, int c = 0) const {
    return (static_cast<size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  std::span<double> pixel(int x, int y) { return {data.data() + index(x, y), static_cast<size_t>(channels)}; }
  std::span<const double> pixel(int x, int y) const {
    return {data.data() + index(x, y), static_cast<size_t>(channels)};
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool same_size(int w, int h) const { return width == w && height == h; }
};

/// H x W boolean mask. Stored as bytes so it can be handed out as a span.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return data[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t count() const {
    size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
  bool any() const { return count() > 0; }
};

/// Channel mean of an image, as a one-channel image.
Image channel_mean(const Image& img);

/// Copy of `img` with every value clamped to [0, 1].
Image clamped01(const Image& img);

} // namespace icogs
