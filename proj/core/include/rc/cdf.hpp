#pragma once

// Quantized CDF tables: cumulative integer counts with total 2^16, every
// symbol interval non-empty. Built from float pmfs by largest-remainder
// rounding on top of a one-count-per-symbol base.

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rc {

inline constexpr std::uint32_t kCdfTotal = 1u << 16;

struct CdfTable {
  // cum[0] = 0, cum[num_symbols] = kCdfTotal, strictly increasing.
  std::vector<std::uint32_t> cum;

  int num_symbols() const { return static_cast<int>(cum.size()) - 1; }
  std::uint32_t freq(int s) const { return cum[s + 1] - cum[s]; }
  bool valid() const;
};

// Quantizes `pmf` (sums to ~1) to integer counts. Every symbol gets at
// least one count; the remaining kCdfTotal - n counts go proportionally to
// the pmf with largest-remainder rounding, ties towards the smaller index.
CdfTable build_cdf_table(const std::vector<double>& pmf);

// Same, but only pmf[lo..hi] may be non-zero; used by the per-subpixel
// coding path to skip the empty part of the support. `pmf` must have
// num_symbols entries.
void build_cdf_table_windowed(const double* pmf, int num_symbols, int lo,
                              int hi, CdfTable& out);

}  // namespace rc
