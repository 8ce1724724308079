#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/types.h>

namespace condvc {

// 8-bit RGB PNG -> [3, H, W] float in [0, 1] (value / 255). Grey, palette,
// alpha and 16-bit inputs are converted to 8-bit RGB first.
torch::Tensor read_png(const std::filesystem::path& path);

// [3, H, W] in [0, 1] -> 8-bit RGB PNG (rounded, clamped).
void write_png(const std::filesystem::path& path, const torch::Tensor& rgb);

// Interleaved 8-bit RGB buffer of width * height * 3 bytes.
void write_png_rgb8(const std::filesystem::path& path, int64_t width, int64_t height,
                    const std::vector<uint8_t>& rgb);

}  // namespace condvc
