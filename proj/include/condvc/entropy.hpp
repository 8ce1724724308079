#pragma once

// Differentiable rate estimation.
//
// Main latents are modelled by a discretized location-scale density whose
// scale comes from a network through `reparameterize_scale`; hyper latents
// use a learned per-channel factorized cumulative. Rates are -log2 of the
// probability mass of the unit bin around each (quantized) value.

#include <string_view>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

namespace condvc {

enum class EntropyFamily { kGaussian, kLaplace };

std::string_view to_string(EntropyFamily family);
EntropyFamily parse_entropy_family(std::string_view name);

inline constexpr double kLikelihoodFloor = 1e-9;
inline constexpr double kScaleShift = 2.3;

// exp(softplus(raw + 2.3) - 2.3). Strictly above exp(-2.3) ~= 0.1003 and
// strictly increasing; unlike clipping, the derivative never vanishes.
torch::Tensor reparameterize_scale(const torch::Tensor& raw);

// P(v) = F(v - loc + 0.5) - F(v - loc - 0.5) under the given family, floored
// at kLikelihoodFloor. `scale` must already be positive (reparameterized);
// a non-positive entry throws.
torch::Tensor bin_probability(const torch::Tensor& value, const torch::Tensor& loc,
                              const torch::Tensor& scale, EntropyFamily family);

struct EntropyParams {
  torch::Tensor loc;
  torch::Tensor raw_scale;
  EntropyFamily family = EntropyFamily::kLaplace;
};

// Per-element -log2 P under `params` (scale reparameterized internally).
torch::Tensor element_bits(const torch::Tensor& latent, const EntropyParams& params);

// Sum of element_bits over the whole tensor.
torch::Tensor rate_bits(const torch::Tensor& latent, const EntropyParams& params);

// Sums everything but the leading batch dimension: [N, ...] -> [N].
torch::Tensor per_sample(const torch::Tensor& bits);

// Learned monotone cumulative per channel, the usual non-parametric
// factorized prior for hyper latents. Each stage is a positive (softplus)
// matrix, a bias and a bounded tanh gating term, so the logits are
// nondecreasing in the input and sigmoid(logits) stays in [0, 1].
class FactorizedDensityImpl : public torch::nn::Module {
 public:
  FactorizedDensityImpl(int64_t channels, std::vector<int64_t> filters = {3, 3, 3},
                        double init_scale = 10.0);

  int64_t channels() const { return channels_; }

  // x: [C, M] -> cumulative logits [C, M].
  torch::Tensor logits_cumulative(const torch::Tensor& x) const;
  torch::Tensor cumulative(const torch::Tensor& x) const;

  // v: [N, C, H, W] -> bin probability, same shape, floored.
  torch::Tensor likelihood(const torch::Tensor& v) const;

  std::vector<torch::Tensor>& matrices() { return matrices_; }
  std::vector<torch::Tensor>& biases() { return biases_; }
  std::vector<torch::Tensor>& factors() { return factors_; }

 private:
  int64_t channels_;
  std::vector<torch::Tensor> matrices_;
  std::vector<torch::Tensor> biases_;
  std::vector<torch::Tensor> factors_;
};
TORCH_MODULE(FactorizedDensity);

// Per-element -log2 of the factorized bin probability.
torch::Tensor factorized_element_bits(const torch::Tensor& latent, const FactorizedDensity& density);
torch::Tensor factorized_rate(const torch::Tensor& latent, const FactorizedDensity& density);

// Estimated rate of the four latents of one coded frame. Each bits_* tensor
// holds one entry per batch element; `pixels` is H*W of the unpadded source.
struct RateBreakdown {
  torch::Tensor bits_motion;
  torch::Tensor bits_motion_hyper;
  torch::Tensor bits_content;
  torch::Tensor bits_content_hyper;
  int64_t pixels = 0;

  torch::Tensor bpp_motion() const { return bits_motion / static_cast<double>(pixels); }
  torch::Tensor bpp_motion_hyper() const { return bits_motion_hyper / static_cast<double>(pixels); }
  torch::Tensor bpp_content() const { return bits_content / static_cast<double>(pixels); }
  torch::Tensor bpp_content_hyper() const { return bits_content_hyper / static_cast<double>(pixels); }
  torch::Tensor bpp_total() const {
    return bpp_motion() + bpp_motion_hyper() + bpp_content() + bpp_content_hyper();
  }
};

}  // namespace condvc
