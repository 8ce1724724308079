#pragma once

// Procedural moving-texture clips: a translating sum of sinusoids with a
// soft-edged disc moving at its own velocity over it. Deterministic in the seed.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/types.h>

namespace condvc {

struct SyntheticSpec {
  int64_t frames = 7;
  int64_t height = 64;
  int64_t width = 64;
  int components = 6;
  double max_speed = 1.5;  // pixels per frame
};

// [frames, 3, height, width] in [0, 1].
torch::Tensor synthetic_clip(const SyntheticSpec& spec, uint64_t seed);

std::vector<torch::Tensor> synthetic_clips(int64_t count, const SyntheticSpec& spec, uint64_t seed);

// Writes clip_NNNN/frame_NNNN.png folders and an index.txt listing them.
// Returns the index path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& root, int64_t count,
                                              const SyntheticSpec& spec, uint64_t seed);

}  // namespace condvc
