#pragma once

// Lossy base layer producers. Two backends:
//  - BPG adapter shelling out to bpgenc/bpgdec (chroma forced to 4:4:4)
//  - a built-in 8x8 block-DCT codec with a fully integer-defined
//    reconstruction path, so the pipeline runs without external binaries
// Both return the payload bytes together with the reconstruction x_l that
// the decode side will reproduce bit-exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "rc/image.hpp"
#include "rc/mixture.hpp"

namespace rc {

inline constexpr int kQMin = 11;
inline constexpr int kQMax = 17;
inline constexpr int kNumQ = kQMax - kQMin + 1;  // |Q| = 7

enum class CodecId : std::uint8_t { kBpg = 0, kFallback = 1 };

struct LossyResult {
  std::vector<std::uint8_t> payload;
  Image x_l;
  CodecId codec_id = CodecId::kFallback;
  int q = 0;
};

// Built-in codec. Flat quantizer step q - 9 over an integer 8x8 DCT;
// payload magic "FBL1". Deterministic across platforms.
LossyResult fallback_compress(const Image& x, int q);
Image fallback_decode(const std::uint8_t* payload, std::size_t size);

// BPG adapter. Binary paths come from RC_BPGENC / RC_BPGDEC (or explicit
// arguments); throws std::runtime_error naming the failure otherwise.
bool bpg_available();
LossyResult bpg_compress(const Image& x, int q,
                         const std::string& enc_path = "",
                         const std::string& dec_path = "");
Image bpg_decode(const std::vector<std::uint8_t>& payload,
                 const std::string& dec_path = "");

LossyResult lossy_compress(const Image& x, int q, CodecId codec);
Image lossy_decode(const std::vector<std::uint8_t>& payload, CodecId codec);

// r = x - x_l; throws on shape mismatch.
Residual compute_residual(const Image& x, const Image& x_l);

// x = x_l + r, clamped check: throws if any sum leaves [0, 255].
Image apply_residual(const Image& x_l, const Residual& r);

}  // namespace rc
