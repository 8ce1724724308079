#pragma once

// Bjontegaard delta rate between two rate-distortion curves.

#include <string_view>

#include "condvc/eval.hpp"

namespace condvc {

// kCubic: least-squares cubic fit of log10(bpp) over PSNR per curve.
// kPchip: piecewise cubic Hermite interpolation (monotone slopes).
enum class BdVariant { kCubic, kPchip };

std::string_view to_string(BdVariant variant);
BdVariant parse_bd_variant(std::string_view name);

// Average rate difference of `test` against `anchor` in percent over the
// common PSNR interval; negative means `test` needs fewer bits. Throws
// Error(kBdRate) with fewer than 4 points per curve or no PSNR overlap.
double bd_rate(const RDCurve& anchor, const RDCurve& test, BdVariant variant = BdVariant::kCubic);

}  // namespace condvc
