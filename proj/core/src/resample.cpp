#include "rc/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kA = 3;  // Lanczos lobes

double sinc(double x) {
  if (x == 0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

double lanczos3(double x) {
  x = std::abs(x);
  if (x >= kA) return 0.0;
  return sinc(x) * sinc(x / kA);
}

struct Taps {
  int first = 0;
  std::vector<double> w;
};

// One row of the resampling matrix per output coordinate, normalized to
// sum 1 so constants are preserved exactly up to rounding.
std::vector<Taps> make_taps(int in_n, int out_n) {
  const double scale = static_cast<double>(in_n) / out_n;
  const double support = kA * std::max(scale, 1.0);
  std::vector<Taps> taps(out_n);
  for (int o = 0; o < out_n; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    Taps t;
    t.first = lo;
    t.w.resize(hi - lo + 1);
    double z = 0;
    for (int i = lo; i <= hi; ++i) {
      const double v = lanczos3((i - center) / std::max(scale, 1.0));
      t.w[i - lo] = v;
      z += v;
    }
    for (auto& v : t.w) v /= z;
    taps[o] = std::move(t);
  }
  return taps;
}

}  // namespace

Image lanczos3_resize(const Image& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("lanczos3_resize: bad output size");
  const auto col_taps = make_taps(src.height, out_h);
  const auto row_taps = make_taps(src.width, out_w);

  // horizontal pass into a float buffer, then vertical
  std::vector<double> tmp(3ull * src.height * out_w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < out_w; ++x) {
        const Taps& t = row_taps[x];
        double acc = 0;
        for (std::size_t i = 0; i < t.w.size(); ++i) {
          const int sx = std::clamp<int>(t.first + static_cast<int>(i), 0,
                                         src.width - 1);
          acc += t.w[i] * src.at(c, y, sx);
        }
        tmp[(static_cast<std::size_t>(c) * src.height + y) * out_w + x] = acc;
      }

  Image out = Image::zeros(out_h, out_w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const Taps& t = col_taps[y];
        double acc = 0;
        for (std::size_t i = 0; i < t.w.size(); ++i) {
          const int sy = std::clamp<int>(t.first + static_cast<int>(i), 0,
                                         src.height - 1);
          acc += t.w[i] *
                 tmp[(static_cast<std::size_t>(c) * src.height + sy) * out_w + x];
        }
        out.at(c, y, x) = static_cast<std::uint8_t>(
            std::clamp(std::lround(acc), 0l, 255l));
      }
  return out;
}

}  // namespace rc
