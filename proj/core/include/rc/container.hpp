#pragma once

// On-disk bitstream: header + lossy payload + tau table + coded residual,
// crc32-protected. Byte layout is normative; see docs/FORMAT.md.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rc {

inline constexpr std::uint8_t kContainerMagic[4] = {'R', 'C', '0', '1'};
inline constexpr std::size_t kTauBytes = 60;

// Distinct parse failures so callers can tell corruption modes apart.
struct BadMagicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadCrcError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncatedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Container {
  // low byte: format version (1); high byte: model weight fingerprint
  std::uint16_t version = 1;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint8_t q = 0;
  std::uint8_t codec_id = 0;
  std::vector<std::uint8_t> lossy_payload;
  std::array<std::uint8_t, kTauBytes> tau{};
  std::vector<std::uint8_t> residual;
};

std::vector<std::uint8_t> write_container(const Container& c);
Container read_container(const std::uint8_t* data, std::size_t size);
Container read_container(const std::vector<std::uint8_t>& bytes);

}  // namespace rc
