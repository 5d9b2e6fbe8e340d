#include "icogs/image.hpp"

#include <algorithm>

namespace icogs {

Image channel_mean(const Image& img) {
  Image out(img.width, img.height, 1);
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    double s = 0.0;
    for (int c = 0; c < img.channels; ++c) s += img.data[i * img.channels + c];
    out.data[i] = s / img.channels;
  }
  return out;
}

Image clamped01(const Image& img) {
  Image out = img;
  for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

} // namespace icogs
