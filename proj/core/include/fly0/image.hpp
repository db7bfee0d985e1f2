#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fly0 {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
  int width{0};
  int height{0};
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h);

  bool valid() const { return width > 0 && height > 0 && rgb.size() == std::size_t(width) * height * 3; }
  std::uint8_t* pixel(int x, int y) { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const { return rgb.data() + (std::size_t(y) * width + x) * 3; }
};

/// Lossless PNG (8-bit truecolor, zlib-compressed IDAT).
std::vector<std::uint8_t> encode_png(const Image& image);

/// RFC 4648 base64 with padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace fly0
