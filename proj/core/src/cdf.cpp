#include "rc/cdf.hpp"

#include <algorithm>
#include <cmath>

namespace rc {

bool CdfTable::valid() const {
  if (cum.size() < 2 || cum.front() != 0 || cum.back() != kCdfTotal)
    return false;
  for (std::size_t i = 1; i < cum.size(); ++i)
    if (cum[i] <= cum[i - 1]) return false;
  return true;
}

void build_cdf_table_windowed(const double* pmf, int num_symbols, int lo,
                              int hi, CdfTable& out) {
  if (num_symbols < 1 || num_symbols >= static_cast<int>(kCdfTotal))
    throw std::invalid_argument("build_cdf_table: unsupported symbol count");
  const std::uint32_t budget = kCdfTotal - static_cast<std::uint32_t>(num_symbols);

  double total = 0;
  for (int i = lo; i <= hi; ++i) total += pmf[i];

  out.cum.assign(num_symbols + 1, 0);
  // counts accumulated in cum[1..]; turned into cumulative sums at the end
  std::uint32_t assigned = 0;
  thread_local std::vector<std::pair<double, int>> rem;
  rem.clear();
  if (total > 0) {
    const double scale = static_cast<double>(budget) / total;
    for (int i = lo; i <= hi; ++i) {
      if (pmf[i] <= 0) continue;
      const double ideal = pmf[i] * scale;
      const double fl = std::floor(ideal);
      const std::uint32_t c = static_cast<std::uint32_t>(fl);
      out.cum[i + 1] = c;
      assigned += c;
      rem.emplace_back(ideal - fl, i);
    }
  }
  std::uint32_t leftover = budget - std::min(budget, assigned);
  // Largest remainder first, ties towards the smaller symbol.
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::size_t ri = 0;
  while (leftover > 0 && ri < rem.size()) {
    out.cum[rem[ri].second + 1] += 1;
    --leftover;
    ++ri;
  }
  // Degenerate pmfs (all-zero / float drift): hand out the rest by index.
  for (int i = 0; leftover > 0; i = (i + 1) % num_symbols) {
    out.cum[i + 1] += 1;
    --leftover;
  }

  std::uint32_t run = 0;
  for (int i = 0; i < num_symbols; ++i) {
    run += out.cum[i + 1] + 1;  // +1 base count per symbol
    out.cum[i + 1] = run;
  }
}

CdfTable build_cdf_table(const std::vector<double>& pmf) {
  CdfTable out;
  build_cdf_table_windowed(pmf.data(), static_cast<int>(pmf.size()), 0,
                           static_cast<int>(pmf.size()) - 1, out);
  return out;
}

}  // namespace rc
