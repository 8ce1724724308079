#pragma once

// Latent quantization used during training and evaluation.
//
// Training relaxes rounding in two ways at once: the rate path sees the
// latent perturbed by additive uniform noise in (-0.5, 0.5), while the
// synthesis path sees a straight-through rounded latent (rounded forward,
// identity backward). Evaluation rounds hard on both paths.

#include <optional>
#include <string_view>

#include <ATen/core/Generator.h>
#include <torch/types.h>

namespace condvc {

enum class QuantVariant { kNoise, kSte, kHard };

// How a codec forward pass quantizes every latent it produces.
//  kTrainNoise: noise on both paths (smooth everywhere; used for gradient checks).
//  kTrainSte:   noise on the rate path, straight-through rounding on the
//               synthesis path. This is the training default.
//  kEval:       hard rounding on both paths, no autograd.
enum class CodingMode { kTrainNoise, kTrainSte, kEval };

std::string_view to_string(QuantVariant variant);
std::string_view to_string(CodingMode mode);
bool is_training(CodingMode mode);

// Round half away from zero, elementwise. Exact for every finite input.
torch::Tensor round_half_away(const torch::Tensor& v);

// v + u, u ~ U(-0.5, 0.5) i.i.d.; the gradient w.r.t. v is the identity.
torch::Tensor quantize_noise(const torch::Tensor& v,
                             std::optional<at::Generator> generator = std::nullopt);

// round_half_away(v) in the forward pass, identity in the backward pass.
torch::Tensor quantize_ste(const torch::Tensor& v);

// round_half_away(v) with no gradient contract.
torch::Tensor quantize_hard(const torch::Tensor& v);

struct QuantizedLatent {
  torch::Tensor for_rate;
  torch::Tensor for_synthesis;
  QuantVariant rate_variant;
  QuantVariant synthesis_variant;
};

QuantizedLatent quantize_latent(const torch::Tensor& v, CodingMode mode,
                                std::optional<at::Generator> generator = std::nullopt);

}  // namespace condvc
