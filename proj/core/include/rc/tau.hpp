#pragma once

// Per-image temperature scaling of the mixture sigmas: 15 factors
// (3 channels x K=5 components), optimized after the network forward pass
// and shipped as 60 bytes of side information.

#include <array>
#include <cstdint>

#include "rc/mixture.hpp"

namespace rc {

inline constexpr double kTauMin = 0.1;
inline constexpr double kTauMax = 10.0;

struct TauTable {
  int k = kDefaultK;
  std::array<float, 3 * kDefaultK> tau;  // [c][k], c-major

  static TauTable identity() {
    TauTable t;
    t.tau.fill(1.f);
    return t;
  }
  float at(int c, int comp) const { return tau[c * kDefaultK + comp]; }
  float& at(int c, int comp) { return tau[c * kDefaultK + comp]; }

  // 15 IEEE-754 little-endian f32, c-major / k-minor; exactly 60 bytes.
  std::array<std::uint8_t, 60> serialize() const;
  static TauTable deserialize(const std::uint8_t* data);
};

// sigma~ = clamp(tau * sigma, sigma_min, inf); pi/mu/lambda untouched.
MixtureParams apply_tau(const MixtureParams& params, const TauTable& tau);

struct TauResult {
  TauTable tau;
  double bits_before = 0;
  double bits_after = 0;  // <= bits_before, guaranteed
};

// SGD with momentum on log tau (lr 9e-2, momentum 0.9, 20 iterations) over
// a 4x spatially subsampled grid; the best iterate is re-scored on the full
// grid against tau=1, so the result never loses bits.
TauResult optimize_tau(const MixtureParams& params, const Residual& residual);

}  // namespace rc
