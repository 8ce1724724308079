#include "condvc/quantizer.hpp"

#include <torch/torch.h>

namespace condvc {

namespace {

class SteRound : public torch::autograd::Function<SteRound> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext*, const torch::Tensor& v) {
    return round_half_away(v);
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext*,
                                                 torch::autograd::variable_list grad_outputs) {
    return {grad_outputs[0]};
  }
};

}  // namespace

std::string_view to_string(QuantVariant variant) {
  switch (variant) {
    case QuantVariant::kNoise: return "noise";
    case QuantVariant::kSte: return "ste";
    case QuantVariant::kHard: return "hard";
  }
  return "?";
}

std::string_view to_string(CodingMode mode) {
  switch (mode) {
    case CodingMode::kTrainNoise: return "train_noise";
    case CodingMode::kTrainSte: return "train_ste";
    case CodingMode::kEval: return "eval";
  }
  return "?";
}

bool is_training(CodingMode mode) { return mode != CodingMode::kEval; }

torch::Tensor round_half_away(const torch::Tensor& v) {
  torch::NoGradGuard no_grad;
  // trunc and v - trunc(v) are both exact, so the tie test is exact too.
  auto whole = torch::trunc(v);
  auto frac = v - whole;
  return whole + torch::where(frac.abs() >= 0.5, torch::sign(v), torch::zeros_like(v));
}

torch::Tensor quantize_noise(const torch::Tensor& v, std::optional<at::Generator> generator) {
  torch::Tensor noise;
  {
    torch::NoGradGuard no_grad;
    noise = torch::rand(v.sizes(), generator, v.options().requires_grad(false)) - 0.5;
    // rand() is half-open, so -0.5 itself can be drawn; fold it onto zero to keep
    // the interval open.
    noise = torch::where(noise.abs() >= 0.5, torch::zeros_like(noise), noise);
  }
  return v + noise;
}

torch::Tensor quantize_ste(const torch::Tensor& v) { return SteRound::apply(v); }

torch::Tensor quantize_hard(const torch::Tensor& v) { return round_half_away(v.detach()); }

QuantizedLatent quantize_latent(const torch::Tensor& v, CodingMode mode,
                                std::optional<at::Generator> generator) {
  switch (mode) {
    case CodingMode::kTrainNoise: {
      auto noisy = quantize_noise(v, generator);
      return {noisy, noisy, QuantVariant::kNoise, QuantVariant::kNoise};
    }
    case CodingMode::kTrainSte:
      return {quantize_noise(v, generator), quantize_ste(v), QuantVariant::kNoise,
              QuantVariant::kSte};
    case CodingMode::kEval: {
      auto hard = quantize_hard(v);
      return {hard, hard, QuantVariant::kHard, QuantVariant::kHard};
    }
  }
  throw std::logic_error("unhandled coding mode");
}

}  // namespace condvc
