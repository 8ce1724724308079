#pragma once

#include <torch/types.h>

namespace condvc {

// Backward warping by a dense flow given in pixels:
//   out[n, c, y, x] = ref[n, c, y + flow[n, 1, y, x], x + flow[n, 0, y, x]]
// sampled bilinearly, with sample coordinates clamped to the image (edge
// replication). ref: [N, C, H, W], flow: [N, 2, H, W]. Differentiable w.r.t.
// both inputs. A zero flow reproduces `ref` bit-exactly.
torch::Tensor warp(const torch::Tensor& ref, const torch::Tensor& flow);

// Pads [N, C, H, W] by edge replication so H and W become multiples of `multiple`.
torch::Tensor pad_to_multiple(const torch::Tensor& x, int64_t multiple);

// Crops the top-left [H, W] window.
torch::Tensor crop_to(const torch::Tensor& x, int64_t height, int64_t width);

}  // namespace condvc
