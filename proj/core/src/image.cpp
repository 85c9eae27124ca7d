#include "rc/image.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace rc {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const char* what) {
  throw std::runtime_error(path + ": " + what);
}

Image load_png(const std::string& path, std::FILE* f) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "png_create_info_struct failed");
  }
  std::vector<std::uint8_t> interleaved;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "libpng decode error");
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  interleaved.resize(3ull * w * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = interleaved.data() + 3ull * w * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img = Image::zeros(static_cast<int>(h), static_cast<int>(w));
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = interleaved[(3ull * w * y) + 3 * x + c];
  return img;
}

void save_png(const Image& img, const std::string& path, std::FILE* f) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "png_create_info_struct failed");
  }
  std::vector<std::uint8_t> interleaved(3ull * img.width * img.height);
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "libpng encode error");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        interleaved[(3ull * img.width * y) + 3 * x + c] = img.at(c, y, x);
    rows[y] = interleaved.data() + 3ull * img.width * y;
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

bool has_suffix(const std::string& s, const char* suf) {
  const std::size_t n = std::strlen(suf);
  return s.size() >= n && s.compare(s.size() - n, n, suf) == 0;
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n",
                              img.width, img.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.reserve(out.size() + img.pixels.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.push_back(img.at(c, y, x));
  return out;
}

Image decode_ppm(const std::uint8_t* data, std::size_t size) {
  std::size_t pos = 0;
  auto token = [&]() -> long {
    // skip whitespace and '#' comments
    while (pos < size) {
      if (std::isspace(data[pos])) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < size && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < size && std::isdigit(data[pos])) {
      v = v * 10 + (data[pos++] - '0');
      any = true;
    }
    if (!any) throw std::runtime_error("ppm: malformed header");
    return v;
  };
  if (size < 2 || data[0] != 'P' || data[1] != '6')
    throw std::runtime_error("ppm: not a P6 file");
  pos = 2;
  const long w = token();
  const long h = token();
  const long maxv = token();
  if (w <= 0 || h <= 0 || maxv != 255)
    throw std::runtime_error("ppm: unsupported dimensions or depth");
  ++pos;  // the single whitespace after maxval
  if (size - pos < static_cast<std::size_t>(3 * w * h))
    throw std::runtime_error("ppm: truncated pixel data");
  Image img = Image::zeros(static_cast<int>(h), static_cast<int>(w));
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = data[pos++];
  return img;
}

Image load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail(path, "cannot open");
  std::uint8_t magic[8] = {0};
  const std::size_t got = std::fread(magic, 1, sizeof(magic), f.get());
  if (got >= 2 && magic[0] == 'P' && magic[1] == '6') {
    std::fseek(f.get(), 0, SEEK_END);
    const long sz = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    std::vector<std::uint8_t> buf(sz);
    if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
      fail(path, "short read");
    return decode_ppm(buf.data(), buf.size());
  }
  if (got == 8 && !png_sig_cmp(magic, 0, 8)) {
    std::fseek(f.get(), 0, SEEK_SET);
    return load_png(path, f.get());
  }
  fail(path, "unrecognized image format (PNG or binary PPM expected)");
}

void save_image(const Image& img, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(path, "cannot open for writing");
  if (has_suffix(path, ".ppm")) {
    const auto bytes = encode_ppm(img);
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
      fail(path, "short write");
    return;
  }
  save_png(img, path, f.get());
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace rc
