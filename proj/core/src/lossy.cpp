#include "rc/lossy.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "rc/cdf.hpp"
#include "rc/range_coder.hpp"

namespace rc {

namespace {

// ---------------------------------------------------------------------------
// Integer 8x8 DCT. Basis rows are round(c(u) cos((2i+1)u pi/16) * 2^14),
// hardcoded so every platform runs the same arithmetic.
// ---------------------------------------------------------------------------
constexpr int kDctShift = 14;
constexpr std::int64_t kBasis[8][8] = {
    {5793, 5793, 5793, 5793, 5793, 5793, 5793, 5793},
    {8035, 6811, 4551, 1598, -1598, -4551, -6811, -8035},
    {7568, 3135, -3135, -7568, -7568, -3135, 3135, 7568},
    {6811, -1598, -8035, -4551, 4551, 8035, 1598, -6811},
    {5793, -5793, -5793, 5793, 5793, -5793, -5793, 5793},
    {4551, -8035, 1598, 6811, -6811, -1598, 8035, -4551},
    {3135, -7568, 7568, -3135, -3135, 7568, -7568, 3135},
    {1598, -4551, 6811, -8035, 8035, -6811, 4551, -1598},
};

constexpr int kCoefMax = 512;              // |index| bound after quantization
constexpr int kNumCoefSyms = 2 * kCoefMax + 1;

int step_for_q(int q) { return q - 9; }    // q in {11..17} -> step in {2..8}

// Static per-band coding tables: geometric weights with an integer-defined
// decay per diagonal u+v. Same tables for every q.
const CdfTable& band_table(int s) {
  static std::array<CdfTable, 15> tables = [] {
    // per-diagonal decay numerator over 1024
    constexpr int kDecay[15] = {1018, 1000, 975, 945, 910, 870, 830, 790,
                                750,  710,  670, 630, 590, 550, 510};
    std::array<CdfTable, 15> out;
    for (int s = 0; s < 15; ++s) {
      std::vector<double> pmf(kNumCoefSyms);
      std::vector<std::int64_t> w(kCoefMax + 1);
      w[0] = 1ll << 40;
      for (int i = 1; i <= kCoefMax; ++i) w[i] = w[i - 1] * kDecay[s] >> 10;
      double z = 0;
      for (int i = -kCoefMax; i <= kCoefMax; ++i) {
        pmf[i + kCoefMax] = static_cast<double>(w[std::abs(i)]) + 1.0;
        z += pmf[i + kCoefMax];
      }
      for (auto& p : pmf) p /= z;
      out[s] = build_cdf_table(pmf);
    }
    return out;
  }();
  return tables[s];
}

// floor-based round-half-up on a 2^kShift fixed-point value; one fixed rule
// everywhere so reconstruction is identical on all platforms
template <int kShift>
std::int64_t fixed_round(std::int64_t v) {
  return (v + (1ll << (kShift - 1))) >> kShift;
}

void forward_block(const int in[8][8], std::int64_t coef[8][8]) {
  std::int64_t t[8][8];
  for (int u = 0; u < 8; ++u)
    for (int j = 0; j < 8; ++j) {
      std::int64_t acc = 0;
      for (int i = 0; i < 8; ++i) acc += kBasis[u][i] * in[i][j];
      t[u][j] = acc;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      std::int64_t acc = 0;
      for (int j = 0; j < 8; ++j) acc += t[u][j] * kBasis[v][j];
      coef[u][v] = acc;  // scale 2^28
    }
}

void inverse_block(const int levels[8][8], int step, int out[8][8]) {
  std::int64_t t[8][8];
  for (int u = 0; u < 8; ++u)
    for (int j = 0; j < 8; ++j) {
      std::int64_t acc = 0;
      for (int v = 0; v < 8; ++v)
        acc += kBasis[v][j] * (static_cast<std::int64_t>(levels[u][v]) * step);
      t[u][j] = acc;
    }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      std::int64_t acc = 0;
      for (int u = 0; u < 8; ++u) acc += kBasis[u][i] * t[u][j];
      const std::int64_t p = fixed_round<2 * kDctShift>(acc) + 128;
      out[i][j] = static_cast<int>(std::clamp<std::int64_t>(p, 0, 255));
    }
}

int quantize(std::int64_t coef, std::int64_t den) {
  const std::int64_t half = den / 2;
  const std::int64_t v =
      coef >= 0 ? (coef + half) / den : -((-coef + half) / den);
  return static_cast<int>(std::clamp<std::int64_t>(v, -kCoefMax, kCoefMax));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

LossyResult fallback_compress(const Image& x, int q) {
  if (q < kQMin || q > kQMax)
    throw std::invalid_argument("fallback_compress: q outside {11..17}");
  const int step = step_for_q(q);
  const std::int64_t den = static_cast<std::int64_t>(step) << (2 * kDctShift);
  const int bh = (x.height + 7) / 8, bw = (x.width + 7) / 8;

  LossyResult res;
  res.codec_id = CodecId::kFallback;
  res.q = q;
  res.x_l = Image::zeros(x.height, x.width);
  res.payload.assign({'F', 'B', 'L', '1'});
  res.payload.push_back(static_cast<std::uint8_t>(q));
  append_u32(res.payload, static_cast<std::uint32_t>(x.height));
  append_u32(res.payload, static_cast<std::uint32_t>(x.width));

  for (int c = 0; c < 3; ++c) {
    RangeEncoder enc;
    for (int by = 0; by < bh; ++by)
      for (int bx = 0; bx < bw; ++bx) {
        int in[8][8];
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            // replicate the last row/column into partial edge blocks
            const int y = std::min(by * 8 + i, x.height - 1);
            const int xx = std::min(bx * 8 + j, x.width - 1);
            in[i][j] = static_cast<int>(x.at(c, y, xx)) - 128;
          }
        std::int64_t coef[8][8];
        forward_block(in, coef);
        int levels[8][8];
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            levels[u][v] = quantize(coef[u][v], den);
            enc.encode_symbol(band_table(u + v), levels[u][v] + kCoefMax);
          }
        int rec[8][8];
        inverse_block(levels, step, rec);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            const int y = by * 8 + i, xx = bx * 8 + j;
            if (y < x.height && xx < x.width)
              res.x_l.at(c, y, xx) = static_cast<std::uint8_t>(rec[i][j]);
          }
      }
    const auto bytes = enc.finish();
    append_u32(res.payload, static_cast<std::uint32_t>(bytes.size()));
    res.payload.insert(res.payload.end(), bytes.begin(), bytes.end());
  }
  return res;
}

Image fallback_decode(const std::uint8_t* payload, std::size_t size) {
  if (size < 13 || std::memcmp(payload, "FBL1", 4) != 0)
    throw std::runtime_error("fallback_decode: bad payload magic");
  const int q = payload[4];
  if (q < kQMin || q > kQMax)
    throw std::runtime_error("fallback_decode: bad q");
  const int h = static_cast<int>(read_u32(payload + 5));
  const int w = static_cast<int>(read_u32(payload + 9));
  if (h <= 0 || w <= 0) throw std::runtime_error("fallback_decode: bad dims");
  const int step = step_for_q(q);
  const int bh = (h + 7) / 8, bw = (w + 7) / 8;

  Image x_l = Image::zeros(h, w);
  std::size_t pos = 13;
  for (int c = 0; c < 3; ++c) {
    if (pos + 4 > size) throw std::runtime_error("fallback_decode: truncated");
    const std::uint32_t len = read_u32(payload + pos);
    pos += 4;
    if (pos + len > size) throw std::runtime_error("fallback_decode: truncated");
    RangeDecoder dec(payload + pos, len);
    pos += len;
    for (int by = 0; by < bh; ++by)
      for (int bx = 0; bx < bw; ++bx) {
        int levels[8][8];
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v)
            levels[u][v] = dec.decode_symbol(band_table(u + v)) - kCoefMax;
        int rec[8][8];
        inverse_block(levels, step, rec);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            const int y = by * 8 + i, xx = bx * 8 + j;
            if (y < h && xx < w)
              x_l.at(c, y, xx) = static_cast<std::uint8_t>(rec[i][j]);
          }
      }
  }
  return x_l;
}

// ---------------------------------------------------------------------------
// BPG adapter
// ---------------------------------------------------------------------------

namespace {

std::string env_or(const char* key, const std::string& fallback) {
  const char* v = std::getenv(key);
  return v && *v ? std::string(v) : fallback;
}

std::string temp_path(const char* suffix) {
  static int counter = 0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "/tmp/rcodec_%d_%d%s", getpid(), counter++,
                suffix);
  return buf;
}

void run_or_throw(const std::string& cmd, const char* what) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  if (rc != 0)
    throw std::runtime_error(std::string(what) + " failed (exit " +
                             std::to_string(rc) + "): " + cmd);
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot read " + path);
  std::fseek(f, 0, SEEK_END);
  const long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<std::uint8_t> out(sz);
  const std::size_t got = std::fread(out.data(), 1, out.size(), f);
  std::fclose(f);
  if (got != out.size()) throw std::runtime_error("short read on " + path);
  return out;
}

}  // namespace

bool bpg_available() {
  const std::string enc = env_or("RC_BPGENC", "bpgenc");
  const std::string dec = env_or("RC_BPGDEC", "bpgdec");
  const std::string probe =
      "command -v " + enc + " >/dev/null 2>&1 && command -v " + dec +
      " >/dev/null 2>&1";
  return std::system(probe.c_str()) == 0;
}

LossyResult bpg_compress(const Image& x, int q, const std::string& enc_path,
                         const std::string& dec_path) {
  if (q < kQMin || q > kQMax)
    throw std::invalid_argument("bpg_compress: q outside {11..17}");
  const std::string enc =
      enc_path.empty() ? env_or("RC_BPGENC", "bpgenc") : enc_path;
  const std::string in_png = temp_path("_in.png");
  const std::string out_bpg = temp_path(".bpg");
  save_image(x, in_png);
  run_or_throw(enc + " -q " + std::to_string(q) + " -f 444 -o " + out_bpg +
                   " " + in_png,
               "bpgenc");
  LossyResult res;
  res.payload = slurp(out_bpg);
  res.codec_id = CodecId::kBpg;
  res.q = q;
  res.x_l = bpg_decode(res.payload, dec_path);
  std::remove(in_png.c_str());
  std::remove(out_bpg.c_str());
  if (!res.x_l.same_shape(x))
    throw std::runtime_error("bpg_compress: decoder returned wrong dimensions");
  return res;
}

Image bpg_decode(const std::vector<std::uint8_t>& payload,
                 const std::string& dec_path) {
  const std::string dec =
      dec_path.empty() ? env_or("RC_BPGDEC", "bpgdec") : dec_path;
  const std::string in_bpg = temp_path(".bpg");
  const std::string out_png = temp_path("_out.png");
  std::FILE* f = std::fopen(in_bpg.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + in_bpg);
  std::fwrite(payload.data(), 1, payload.size(), f);
  std::fclose(f);
  run_or_throw(dec + " -o " + out_png + " " + in_bpg, "bpgdec");
  Image x_l = load_image(out_png);
  std::remove(in_bpg.c_str());
  std::remove(out_png.c_str());
  return x_l;
}

LossyResult lossy_compress(const Image& x, int q, CodecId codec) {
  return codec == CodecId::kBpg ? bpg_compress(x, q) : fallback_compress(x, q);
}

Image lossy_decode(const std::vector<std::uint8_t>& payload, CodecId codec) {
  if (codec == CodecId::kBpg) return bpg_decode(payload);
  return fallback_decode(payload.data(), payload.size());
}

Residual compute_residual(const Image& x, const Image& x_l) {
  if (!x.same_shape(x_l))
    throw std::invalid_argument("compute_residual: shape mismatch");
  Residual r = Residual::zeros(x.height, x.width);
  for (std::size_t i = 0; i < x.pixels.size(); ++i)
    r.values[i] =
        static_cast<std::int16_t>(static_cast<int>(x.pixels[i]) - x_l.pixels[i]);
  return r;
}

Image apply_residual(const Image& x_l, const Residual& r) {
  if (x_l.height != r.height || x_l.width != r.width)
    throw std::invalid_argument("apply_residual: shape mismatch");
  Image x = Image::zeros(x_l.height, x_l.width);
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const int v = static_cast<int>(x_l.pixels[i]) + r.values[i];
    if (v < 0 || v > 255)
      throw std::runtime_error("apply_residual: sum outside [0,255]");
    x.pixels[i] = static_cast<std::uint8_t>(v);
  }
  return x;
}

}  // namespace rc
