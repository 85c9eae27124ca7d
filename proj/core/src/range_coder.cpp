#include "rc/range_coder.hpp"

#include <algorithm>
#include <stdexcept>

namespace rc {

namespace {
constexpr std::uint64_t kLowMask = (1ull << 40) - 1;
constexpr std::uint64_t kTop = 1ull << 32;
constexpr std::uint64_t kRangeInit = (1ull << 40) - 1;
}  // namespace

RangeEncoder::RangeEncoder() : range_(kRangeInit) {
  out_.push_back(0);  // carry absorber
}

void RangeEncoder::carry() {
  for (std::size_t i = out_.size(); i-- > 0;) {
    if (++out_[i] != 0) return;
  }
  throw std::logic_error("range coder carry out of stream");
}

void RangeEncoder::renorm() {
  while (range_ < kTop) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 32));
    low_ = (low_ << 8) & kLowMask;
    range_ <<= 8;
  }
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
  if (freq == 0 || cum + freq > kCdfTotal)
    throw std::invalid_argument("range encoder: invalid interval");
  const std::uint64_t step = range_ >> 16;
  low_ += static_cast<std::uint64_t>(cum) * step;
  range_ = static_cast<std::uint64_t>(freq) * step;
  if (low_ > kLowMask) {
    carry();
    low_ &= kLowMask;
  }
  renorm();
}

void RangeEncoder::encode_symbol(const CdfTable& table, int symbol) {
  if (symbol < 0 || symbol >= table.num_symbols())
    throw std::invalid_argument("range encoder: symbol outside table support");
  encode(table.cum[symbol], table.freq(symbol));
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (finished_) throw std::logic_error("range encoder already finished");
  finished_ = true;
  // Any value in [low, low+range) terminates the stream; pick the multiple
  // of 2^32 so only one more byte needs to be emitted (range >= 2^32 here).
  std::uint64_t v = (low_ + (kTop - 1)) & ~(kTop - 1);
  if (v > kLowMask) {
    carry();
    v &= kLowMask;
  }
  out_.push_back(static_cast<std::uint8_t>(v >> 32));
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::uint8_t* data, std::size_t size)
    : p_(data), end_(data + size), range_(kRangeInit) {
  next_byte();  // skip the encoder's carry absorber byte
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (p_ < end_) return *p_++;
  if (pad_budget_-- > 0) return 0;  // the zero bytes finish() left implicit
  throw std::runtime_error("range decoder: truncated stream");
}

int RangeDecoder::decode_symbol(const CdfTable& table) {
  const std::uint64_t step = range_ >> 16;
  std::uint32_t val = static_cast<std::uint32_t>(
      std::min<std::uint64_t>(code_ / step, kCdfTotal - 1));
  // find s with cum[s] <= val < cum[s+1]
  const auto& cum = table.cum;
  int lo = 0, hi = table.num_symbols();
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (cum[mid] <= val)
      lo = mid;
    else
      hi = mid;
  }
  code_ -= static_cast<std::uint64_t>(cum[lo]) * step;
  range_ = static_cast<std::uint64_t>(table.freq(lo)) * step;
  while (range_ < kTop) {
    code_ = ((code_ << 8) | next_byte()) & kLowMask;
    range_ <<= 8;
  }
  return lo;
}

}  // namespace rc
