#pragma once

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/conv.h>

namespace condvc {

inline constexpr double kLeakySlope = 0.1;

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel = 3, int64_t stride = 1);
torch::nn::ConvTranspose2d deconv(int64_t in, int64_t out, int64_t kernel = 5, int64_t stride = 2);

// Adds an identity map from input channels [in_offset, in_offset + count) to output channels [0, count)
// on the centre tap and scales the random part by `residual_scale`. The layer then starts as a near copy.
void identity_init(torch::nn::Conv2d& layer, int64_t in_offset, int64_t count, double residual_scale);

class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ResBlock);

// `stages` stride-2 5x5 convolutions: in -> hidden -> ... -> out, LeakyReLU between, He-normal init.
// `output_gain` scales the initial weights of the last layer.
torch::nn::Sequential analysis_transform(int64_t in, int64_t hidden, int64_t out, int stages,
                                         double output_gain = 1.0);
// `stages` stride-2 5x5 transposed convolutions, mirror of analysis_transform.
torch::nn::Sequential synthesis_transform(int64_t in, int64_t hidden, int64_t out, int stages);

// Two-stage hyper analysis (/4) and synthesis (x4).
torch::nn::Sequential hyper_analysis(int64_t latent, int64_t hidden, int64_t hyper);
torch::nn::Sequential hyper_synthesis(int64_t hyper, int64_t hidden, int64_t out);

}  // namespace condvc
