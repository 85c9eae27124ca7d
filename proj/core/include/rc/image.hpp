#pragma once

// 8-bit RGB images, planar in memory. File I/O: PNG (libpng) and binary
// PPM (P6). Format picked by extension on save, by magic bytes on load.

#include <cstdint>
#include <string>
#include <vector>

namespace rc {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // [3][H][W]

  static Image zeros(int h, int w) {
    return Image{h, w, std::vector<std::uint8_t>(3ull * h * w, 0)};
  }
  std::uint8_t at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::uint8_t& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t num_subpixels() const { return pixels.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
};

// Throws std::runtime_error with the path and reason on failure. Grayscale
// and palette PNGs are expanded to RGB; alpha is stripped.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

// In-memory PPM (P6), used by the container tooling and tests.
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(const std::uint8_t* data, std::size_t size);

double psnr(const Image& a, const Image& b);

}  // namespace rc
