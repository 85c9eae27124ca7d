#pragma once

// Separable Lanczos-3 downscaling for dataset preparation.

#include "rc/image.hpp"

namespace rc {

// Resizes to (out_h, out_w). Kernel support is widened by the scale factor
// when downscaling so the filter acts as a proper low-pass. Edges clamp.
Image lanczos3_resize(const Image& src, int out_h, int out_w);

}  // namespace rc
