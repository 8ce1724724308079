#include "condvc/entropy.hpp"

#include <cmath>

#include <torch/torch.h>

#include "condvc/errors.hpp"

namespace condvc {

std::string_view to_string(EntropyFamily family) {
  return family == EntropyFamily::kGaussian ? "gaussian" : "laplace";
}

EntropyFamily parse_entropy_family(std::string_view name) {
  if (name == "gaussian") return EntropyFamily::kGaussian;
  if (name == "laplace") return EntropyFamily::kLaplace;
  fail(ErrorCategory::kConfig, "entropy_family must be 'gaussian' or 'laplace', got '" +
                                   std::string(name) + "'");
}

torch::Tensor reparameterize_scale(const torch::Tensor& raw) {
  return torch::exp(torch::softplus(raw + kScaleShift) - kScaleShift);
}

namespace {

// Bin mass of a zero-mean Laplace(b) over [d - 0.5, d + 0.5] for d >= 0.
// Written per branch so that neither branch can overflow and the result is
// C1 at d = 0.5 where the bin edge crosses the mode.
torch::Tensor laplace_bin(const torch::Tensor& d, const torch::Tensor& b) {
  auto inner_d = torch::clamp_max(d, 0.5);
  auto outer_d = torch::clamp_min(d, 0.5);
  auto inner = 1.0 - 0.5 * torch::exp((inner_d - 0.5) / b) - 0.5 * torch::exp(-(inner_d + 0.5) / b);
  auto outer = 0.5 * torch::exp(-(outer_d - 0.5) / b) * -torch::expm1(-1.0 / b);
  return torch::where(d < 0.5, inner, outer);
}

torch::Tensor std_normal_cdf(const torch::Tensor& x) {
  return 0.5 * torch::erfc(-x * M_SQRT1_2);
}

torch::Tensor gaussian_bin(const torch::Tensor& d, const torch::Tensor& sigma) {
  return std_normal_cdf((0.5 - d) / sigma) - std_normal_cdf((-0.5 - d) / sigma);
}

}  // namespace

torch::Tensor bin_probability(const torch::Tensor& value, const torch::Tensor& loc,
                              const torch::Tensor& scale, EntropyFamily family) {
  if ((scale <= 0).any().item<bool>()) {
    fail(ErrorCategory::kNumeric,
         "bin_probability: non-positive scale (scale reparameterization bypassed?)");
  }
  // Both families are symmetric about loc, so work with the distance.
  auto d = torch::abs(value - loc);
  auto p = family == EntropyFamily::kLaplace ? laplace_bin(d, scale) : gaussian_bin(d, scale);
  return torch::clamp_min(p, kLikelihoodFloor);
}

torch::Tensor element_bits(const torch::Tensor& latent, const EntropyParams& params) {
  auto p = bin_probability(latent, params.loc, reparameterize_scale(params.raw_scale), params.family);
  return -torch::log2(p);
}

torch::Tensor rate_bits(const torch::Tensor& latent, const EntropyParams& params) {
  return element_bits(latent, params).sum();
}

torch::Tensor per_sample(const torch::Tensor& bits) {
  if (bits.dim() == 0) return bits.reshape({1});
  return bits.reshape({bits.size(0), -1}).sum(1);
}

FactorizedDensityImpl::FactorizedDensityImpl(int64_t channels, std::vector<int64_t> filters,
                                             double init_scale)
    : channels_(channels) {
  std::vector<int64_t> widths{1};
  widths.insert(widths.end(), filters.begin(), filters.end());
  widths.push_back(1);
  const auto stages = widths.size() - 1;
  const double scale = std::pow(init_scale, 1.0 / static_cast<double>(stages));

  for (size_t i = 0; i < stages; ++i) {
    const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(widths[i + 1])));
    auto matrix = torch::full({channels, widths[i + 1], widths[i]}, init);
    matrices_.push_back(register_parameter("matrix" + std::to_string(i), matrix));

    auto bias = torch::rand({channels, widths[i + 1], 1}) - 0.5;
    biases_.push_back(register_parameter("bias" + std::to_string(i), bias));

    if (i + 1 < stages) {
      auto factor = torch::zeros({channels, widths[i + 1], 1});
      factors_.push_back(register_parameter("factor" + std::to_string(i), factor));
    }
  }
}

torch::Tensor FactorizedDensityImpl::logits_cumulative(const torch::Tensor& x) const {
  auto logits = x.unsqueeze(1);  // [C, 1, M]
  for (size_t i = 0; i < matrices_.size(); ++i) {
    logits = torch::matmul(torch::softplus(matrices_[i]), logits) + biases_[i];
    if (i < factors_.size()) logits = logits + torch::tanh(factors_[i]) * torch::tanh(logits);
  }
  return logits.squeeze(1);
}

torch::Tensor FactorizedDensityImpl::cumulative(const torch::Tensor& x) const {
  return torch::sigmoid(logits_cumulative(x));
}

torch::Tensor FactorizedDensityImpl::likelihood(const torch::Tensor& v) const {
  if (v.dim() != 4 || v.size(1) != channels_) {
    fail(ErrorCategory::kShape, "factorized density expects [N, " + std::to_string(channels_) +
                                    ", H, W], got " + c10::str(v.sizes()));
  }
  // [N, C, H, W] -> [C, N*H*W]
  auto flat = v.transpose(0, 1).reshape({channels_, -1});
  auto lower = logits_cumulative(flat - 0.5);
  auto upper = logits_cumulative(flat + 0.5);
  // Evaluate in whichever tail keeps the sigmoid differences well conditioned.
  auto sign = torch::where(lower + upper > 0, -torch::ones_like(lower), torch::ones_like(lower)).detach();
  auto p = torch::abs(torch::sigmoid(sign * upper) - torch::sigmoid(sign * lower));
  p = torch::clamp_min(p, kLikelihoodFloor);
  return p.reshape({channels_, v.size(0), v.size(2), v.size(3)}).transpose(0, 1);
}

torch::Tensor factorized_element_bits(const torch::Tensor& latent, const FactorizedDensity& density) {
  return -torch::log2(density->likelihood(latent));
}

torch::Tensor factorized_rate(const torch::Tensor& latent, const FactorizedDensity& density) {
  return factorized_element_bits(latent, density).sum();
}

}  // namespace condvc
