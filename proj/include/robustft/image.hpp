#pragma once

#include <cstddef>
#include <vector>

namespace robustft {

/// H x W x C image with interleaved channels and values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return (y * width + x) * channels + c;
  }
  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return pixels[index(y, x, c)]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept { return pixels[index(y, x, c)]; }

  bool in_unit_range() const noexcept;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Bitwise equality of pixel buffers (distinguishes -0.0 from 0.0).
bool bitwise_equal(const Image& a, const Image& b);

}  // namespace robustft
