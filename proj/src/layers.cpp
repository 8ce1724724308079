#include "condvc/layers.hpp"

#include <torch/torch.h>

#include "condvc/errors.hpp"

namespace condvc {

namespace nn = torch::nn;

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

nn::ConvTranspose2d deconv(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, kernel)
                                 .stride(stride)
                                 .padding(kernel / 2)
                                 .output_padding(stride - 1));
}

void identity_init(nn::Conv2d& layer, int64_t in_offset, int64_t count, double residual_scale) {
  auto& w = layer->weight;
  const auto k = w.size(2) / 2;
  if (in_offset + count > w.size(1) || count > w.size(0)) {
    fail(ErrorCategory::kShape, "identity_init: channel range exceeds the layer");
  }
  torch::NoGradGuard guard;
  w.mul_(residual_scale);
  layer->bias.mul_(residual_scale);
  for (int64_t c = 0; c < count; ++c) w[c][in_offset + c][k][k] += 1.0;
}

namespace {

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)); }

// He-normal keeps activation energy roughly constant through the stack. The framework default shrinks it
// about threefold per layer, which leaves fresh latents deep inside the rounding dead zone.
nn::Conv2d he_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  auto c = conv(in, out, kernel, stride);
  torch::NoGradGuard guard;
  nn::init::kaiming_normal_(c->weight, kLeakySlope, torch::kFanIn, torch::kLeakyReLU);
  nn::init::zeros_(c->bias);
  return c;
}

}  // namespace

ResBlockImpl::ResBlockImpl(int64_t channels)
    : conv1_(register_module("conv1", conv(channels, channels))),
      conv2_(register_module("conv2", conv(channels, channels))) {}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::leaky_relu(conv1_(x), kLeakySlope);
  out = conv2_(out);
  return x + out;
}

nn::Sequential analysis_transform(int64_t in, int64_t hidden, int64_t out, int stages, double output_gain) {
  nn::Sequential seq;
  for (int i = 0; i < stages; ++i) {
    const auto cin = i == 0 ? in : hidden;
    const bool last = i + 1 == stages;
    auto layer = he_conv(cin, last ? out : hidden, 5, 2);
    if (last) {
      torch::NoGradGuard guard;
      layer->weight.mul_(output_gain);
    }
    seq->push_back(layer);
    if (!last) seq->push_back(leaky());
  }
  return seq;
}

nn::Sequential synthesis_transform(int64_t in, int64_t hidden, int64_t out, int stages) {
  nn::Sequential seq;
  for (int i = 0; i < stages; ++i) {
    const auto cin = i == 0 ? in : hidden;
    const auto cout = i + 1 == stages ? out : hidden;
    seq->push_back(deconv(cin, cout));
    if (i + 1 < stages) seq->push_back(leaky());
  }
  return seq;
}

nn::Sequential hyper_analysis(int64_t latent, int64_t hidden, int64_t hyper) {
  return nn::Sequential(conv(latent, hidden), leaky(), conv(hidden, hidden, 5, 2), leaky(),
                        conv(hidden, hyper, 5, 2));
}

nn::Sequential hyper_synthesis(int64_t hyper, int64_t hidden, int64_t out) {
  return nn::Sequential(deconv(hyper, hidden), leaky(), deconv(hidden, hidden), leaky(),
                        conv(hidden, out));
}

}  // namespace condvc
