#include "rc/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rc {

namespace {

// CDF evaluated at bin edge z = (t - mu) / sigma.
inline double logistic_cdf(double t, double mu, double sigma) {
  return detail::stable_sigmoid((t - mu) / sigma);
}

// Window half-width in sigmas for the coding tables. Mass outside the
// window (< 1e-6 of a component) is folded onto the window edges, far below
// one CDF count.
constexpr double kWindowZ = 14.0;

}  // namespace

double discrete_logistic_pmf(int r, double mu, double sigma, int rmin,
                             int rmax) {
  if (r < rmin || r > rmax)
    throw std::invalid_argument("discrete_logistic_pmf: r outside support");
  if (r == rmin) return logistic_cdf(rmin + 0.5, mu, sigma);
  if (r == rmax)
    return detail::stable_sigmoid(-(rmax - 0.5 - mu) / sigma);  // upper tail
  const auto bin = detail::logistic_bin(r, mu, sigma);
  return bin.p;
}

void conditional_means(const MixtureParams& p, int c, int y, int x, int r1,
                       int r2, double* mu_tilde) {
  for (int k = 0; k < p.k; ++k) {
    double m = p.mu[p.idx(c, k, y, x)];
    if (c == 1) m += static_cast<double>(p.lambda[p.idx(0, k, y, x)]) * r1;
    if (c == 2)
      m += static_cast<double>(p.lambda[p.idx(1, k, y, x)]) * r1 +
           static_cast<double>(p.lambda[p.idx(2, k, y, x)]) * r2;
    mu_tilde[k] = m;
  }
}

void pixel_pmf(const MixtureParams& p, int c, int y, int x, int r1, int r2,
               double* pmf) {
  std::vector<double> mt(p.k);
  conditional_means(p, c, y, x, r1, r2, mt.data());
  std::fill(pmf, pmf + kResBins, 0.0);
  // Renormalize pi in double so the result is an exact distribution even
  // though the weights are stored in float.
  double z = 0;
  for (int k = 0; k < p.k; ++k) z += p.pi[p.idx(c, k, y, x)];
  for (int k = 0; k < p.k; ++k) {
    const double pi = p.pi[p.idx(c, k, y, x)] / z;
    const double sg = p.sigma[p.idx(c, k, y, x)];
    for (int r = kResMin; r <= kResMax; ++r)
      pmf[r - kResMin] += pi * discrete_logistic_pmf(r, mt[k], sg);
  }
}

double nll_bits(const Residual& r, const MixtureParams& p, long* underflows) {
  if (r.height != p.height || r.width != p.width)
    throw std::invalid_argument("nll_bits: shape mismatch");
  double total = 0;
  long uf = 0;
  std::vector<double> mt(p.k);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      const int r1 = r.at(0, y, x);
      const int r2 = r.at(1, y, x);
      const int rr[3] = {r1, r2, r.at(2, y, x)};
      for (int c = 0; c < 3; ++c) {
        if (rr[c] < kResMin || rr[c] > kResMax)
          throw std::invalid_argument("nll_bits: residual outside support");
        conditional_means(p, c, y, x, r1, r2, mt.data());
        double prob = 0;
        for (int k = 0; k < p.k; ++k) {
          prob += static_cast<double>(p.pi[p.idx(c, k, y, x)]) *
                  discrete_logistic_pmf(rr[c], mt[k],
                                        p.sigma[p.idx(c, k, y, x)]);
        }
        if (prob < kPmfFloor) {
          ++uf;
          prob = kPmfFloor;
        }
        total += -std::log2(prob);
      }
    }
  }
  if (underflows) *underflows += uf;
  return total;
}

void CodingCdfBuilder::build(const MixtureParams& p, int c, int y, int x,
                             int r1, int r2, CdfTable& out) {
  double mt[64];
  conditional_means(p, c, y, x, r1, r2, mt);
  int lo = kResBins, hi = -1;
  for (int k = 0; k < p.k; ++k) {
    const double pi = p.pi[p.idx(c, k, y, x)];
    const double sg = p.sigma[p.idx(c, k, y, x)];
    int wlo = static_cast<int>(std::floor(mt[k] - kWindowZ * sg));
    int whi = static_cast<int>(std::ceil(mt[k] + kWindowZ * sg));
    wlo = std::clamp(wlo, kResMin, kResMax);
    whi = std::clamp(whi, kResMin, kResMax);
    lo = std::min(lo, wlo - kResMin);
    hi = std::max(hi, whi - kResMin);
    // Interior bins by CDF differences; the window edges absorb everything
    // beyond them so each component contributes exactly pi in total.
    double prev = 0.0;
    for (int r = wlo; r < whi; ++r) {
      const double cdf = logistic_cdf(r + 0.5, mt[k], sg);
      pmf_[r - kResMin] += pi * (cdf - prev);
      prev = cdf;
    }
    pmf_[whi - kResMin] += pi * (1.0 - prev);
  }
  build_cdf_table_windowed(pmf_.data(), kResBins, lo, hi, out);
  std::fill(pmf_.begin() + lo, pmf_.begin() + hi + 1, 0.0);
}

Residual sample_residual(const MixtureParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Residual res = Residual::zeros(p.height, p.width);
  std::vector<double> mt(p.k);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      int r1 = 0, r2 = 0;
      for (int c = 0; c < 3; ++c) {
        conditional_means(p, c, y, x, r1, r2, mt.data());
        // component from pi
        double u = uni(rng);
        int comp = p.k - 1;
        double acc = 0;
        for (int k = 0; k < p.k; ++k) {
          acc += p.pi[p.idx(c, k, y, x)];
          if (u < acc) {
            comp = k;
            break;
          }
        }
        double v = uni(rng);
        v = std::min(std::max(v, 1e-12), 1.0 - 1e-12);
        const double sg = p.sigma[p.idx(c, comp, y, x)];
        const double draw = mt[comp] + sg * (std::log(v) - std::log1p(-v));
        const int r = std::clamp(static_cast<int>(std::lround(draw)), kResMin,
                                 kResMax);
        res.at(c, y, x) = static_cast<std::int16_t>(r);
        if (c == 0) r1 = r;
        if (c == 1) r2 = r;
      }
    }
  }
  return res;
}

}  // namespace rc
