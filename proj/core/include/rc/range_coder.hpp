#pragma once

// Byte-oriented range coder. 40-bit low/range state, renormalization one
// byte at a time, carries propagated directly into the output buffer.
// Probabilities are given as quantized CDF tables with total 2^16.
//
// Stream format (normative, see docs/FORMAT.md):
//   - the encoder starts with one leading zero byte that absorbs carries
//   - renormalization emits the byte at bit offset 32 of `low` whenever
//     range < 2^32
//   - finish() rounds `low` up to a multiple of 2^32 inside the current
//     interval and emits the single remaining non-zero byte; the decoder
//     zero-pads (at most 4 bytes) past the end of the stream
// The decoder needs the symbol count externally; there is no terminator.

#include <cstdint>
#include <vector>

#include "rc/cdf.hpp"

namespace rc {

struct CodedStream {
  std::vector<std::uint8_t> bytes;
  std::uint64_t symbol_count = 0;
};

class RangeEncoder {
 public:
  RangeEncoder();

  // cum/freq are in units of 1/65536; freq >= 1.
  void encode(std::uint32_t cum, std::uint32_t freq);
  void encode_symbol(const CdfTable& table, int symbol);

  // Flushes and returns the stream. The encoder is spent afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void renorm();
  void carry();

  std::vector<std::uint8_t> out_;
  std::uint64_t low_ = 0;
  std::uint64_t range_;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  RangeDecoder(const std::uint8_t* data, std::size_t size);
  explicit RangeDecoder(const std::vector<std::uint8_t>& bytes)
      : RangeDecoder(bytes.data(), bytes.size()) {}

  // Returns the symbol index under `table`. Throws on truncated input.
  int decode_symbol(const CdfTable& table);

 private:
  std::uint8_t next_byte();

  const std::uint8_t* p_;
  const std::uint8_t* end_;
  int pad_budget_ = 4;
  std::uint64_t code_ = 0;
  std::uint64_t range_;
};

}  // namespace rc
