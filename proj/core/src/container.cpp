#include "rc/container.hpp"

#include <zlib.h>

#include <cstring>
#include <limits>

namespace rc {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back(v >> 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

struct Reader {
  const std::uint8_t* p;
  std::size_t left;

  void need(std::size_t n, const char* section) {
    if (left < n)
      throw TruncatedError(std::string("container truncated in ") + section);
    (void)section;
  }
  const std::uint8_t* take(std::size_t n, const char* section) {
    need(n, section);
    const std::uint8_t* r = p;
    p += n;
    left -= n;
    return r;
  }
  std::uint16_t u16(const char* s) {
    const std::uint8_t* b = take(2, s);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32(const char* s) {
    const std::uint8_t* b = take(4, s);
    return b[0] | (b[1] << 8) | (b[2] << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
};

}  // namespace

std::vector<std::uint8_t> write_container(const Container& c) {
  if (c.lossy_payload.size() > std::numeric_limits<std::uint32_t>::max() ||
      c.residual.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::length_error("container section exceeds u32");
  std::vector<std::uint8_t> out;
  out.reserve(24 + kTauBytes + c.lossy_payload.size() + c.residual.size() + 4);
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  put_u16(out, c.version);
  put_u32(out, c.height);
  put_u32(out, c.width);
  out.push_back(c.q);
  out.push_back(c.codec_id);
  put_u32(out, static_cast<std::uint32_t>(c.lossy_payload.size()));
  out.insert(out.end(), c.lossy_payload.begin(), c.lossy_payload.end());
  out.insert(out.end(), c.tau.begin(), c.tau.end());
  put_u32(out, static_cast<std::uint32_t>(c.residual.size()));
  out.insert(out.end(), c.residual.begin(), c.residual.end());
  const auto crc =
      crc32(0, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
  return out;
}

Container read_container(const std::uint8_t* data, std::size_t size) {
  Reader r{data, size};
  const std::uint8_t* magic = r.take(4, "magic");
  if (std::memcmp(magic, kContainerMagic, 4) != 0)
    throw BadMagicError("container: unsupported format (bad magic)");
  Container c;
  c.version = r.u16("version");
  c.height = r.u32("height");
  c.width = r.u32("width");
  c.q = *r.take(1, "q");
  c.codec_id = *r.take(1, "codec_id");
  const std::uint32_t lossy_len = r.u32("lossy length");
  const std::uint8_t* lp = r.take(lossy_len, "lossy payload");
  c.lossy_payload.assign(lp, lp + lossy_len);
  const std::uint8_t* tp = r.take(kTauBytes, "tau table");
  std::memcpy(c.tau.data(), tp, kTauBytes);
  const std::uint32_t res_len = r.u32("residual length");
  const std::uint8_t* rp = r.take(res_len, "residual section");
  c.residual.assign(rp, rp + res_len);
  const std::size_t body = size - r.left;  // bytes covered by the crc
  const std::uint32_t want = r.u32("crc");
  const auto got = crc32(0, reinterpret_cast<const Bytef*>(data),
                         static_cast<uInt>(body));
  if (static_cast<std::uint32_t>(got) != want)
    throw BadCrcError("container: crc mismatch");
  return c;
}

Container read_container(const std::vector<std::uint8_t>& bytes) {
  return read_container(bytes.data(), bytes.size());
}

}  // namespace rc
