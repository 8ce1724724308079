#pragma once

// Conditional P-frame codec with a companion hyperprior intra codec.
//
// A P-frame is coded as
//   estimate_motion -> code_motion -> warp -> extract_context -> code_contextual
// i.e. motion is estimated against the previous reconstruction, compressed
// through its own latent/hyperprior pair, and the decoded motion aligns a
// feature of the previous reconstruction into a context. The frame itself is
// then coded *conditioned* on that context: the context enters the analysis
// transform, the entropy model (as a temporal prior next to the hyperprior)
// and the synthesis transform.
//
// Tensors are batched: frames are [N, 3, H, W] with values in [0, 1].

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <ATen/core/Generator.h>
#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>

#include "condvc/entropy.hpp"
#include "condvc/layers.hpp"
#include "condvc/quantizer.hpp"
#include "condvc/stage.hpp"

namespace condvc {

// Spatial granularity the codec needs: 4 stride-2 main stages and 2 hyper stages.
inline constexpr int64_t kPadMultiple = 64;

enum class FrameRole { kSource, kReconstruction, kWarped };

// One frame, [3, H, W] in [0, 1].
struct Frame {
  torch::Tensor pixels;
  FrameRole role = FrameRole::kSource;

  int64_t height() const { return pixels.size(-2); }
  int64_t width() const { return pixels.size(-1); }
};

struct VideoSequence {
  std::vector<Frame> frames;
  std::string source_id;
};

// Reserved hooks for richer context/entropy models. They carry no
// implementation; setting any of them is rejected by validate().
struct CodecExtensions {
  bool tcm_multiscale = false;
  bool hem_dual_prior = false;
  bool dc_quadtree = false;
};

struct CodecConfig {
  int64_t me_channels = 16;
  int64_t mv_transform_channels = 24;
  int64_t mv_latent_channels = 24;
  int64_t mv_hyper_channels = 16;
  int64_t context_channels = 16;
  int64_t transform_channels = 32;
  int64_t latent_channels = 32;
  int64_t hyper_channels = 24;
  int64_t prior_channels = 24;
  int64_t intra_transform_channels = 32;
  int64_t intra_latent_channels = 32;
  int64_t intra_hyper_channels = 24;
  std::vector<int64_t> density_filters{3, 3, 3};
  EntropyFamily entropy_family = EntropyFamily::kLaplace;
  double lambda = 2048.0;
  CodecExtensions extensions;

  // Throws Error(kConfig) naming the offending field.
  void validate() const;

  // A few thousand parameters; for finite-difference checks.
  static CodecConfig toy();
};

struct ReferenceState {
  torch::Tensor recon_frame;    // x_hat_{t-1}, [N, 3, H, W]
  torch::Tensor recon_feature;  // optional [N, C, H, W]; undefined when absent
};

struct LatentSet {
  torch::Tensor motion;
  torch::Tensor motion_hyper;
  torch::Tensor content;
  torch::Tensor content_hyper;
};

// Which quantizer fed the rate and synthesis paths of one latent.
struct QuantRecord {
  std::string latent;
  QuantVariant rate_variant;
  QuantVariant synthesis_variant;
};

struct MotionCoding {
  torch::Tensor decoded_flow;
  torch::Tensor motion_latent;  // g_hat
  torch::Tensor motion_hyper;   // s_hat
  torch::Tensor bits_motion;    // [N]
  torch::Tensor bits_motion_hyper;
  std::vector<QuantRecord> quant;
};

struct ContextualCoding {
  torch::Tensor recon;           // x_hat
  torch::Tensor content_latent;  // y_hat
  torch::Tensor content_hyper;   // z_hat
  torch::Tensor bits_content;    // [N]
  torch::Tensor bits_content_hyper;
  torch::Tensor feature;  // pre-reconstruction feature, propagated as reference
  std::vector<QuantRecord> quant;
};

struct IntraResult {
  torch::Tensor recon;
  torch::Tensor latent;
  torch::Tensor hyper;
  RateBreakdown rates;      // motion terms are zero
  torch::Tensor distortion;  // MSE per sample, [N]
  std::vector<QuantRecord> quant;

  ReferenceState next_reference() const { return {recon, {}}; }
};

struct FrameResult {
  torch::Tensor recon;         // x_hat_t
  torch::Tensor warped;        // x_tilde_t
  torch::Tensor decoded_flow;  // [N, 2, H, W]
  LatentSet latents;
  RateBreakdown rates;
  torch::Tensor distortion_warped;  // D(x_t, x_tilde_t), MSE per sample
  torch::Tensor distortion_recon;   // D(x_t, x_hat_t)
  torch::Tensor feature;
  bool content_rates_used = true;  // false in the motion warm-up stage
  std::vector<QuantRecord> quant;

  ReferenceState next_reference() const { return {recon, feature}; }
};

// Mean squared error per batch element over channels and pixels: [N].
torch::Tensor mse_per_sample(const torch::Tensor& a, const torch::Tensor& b);

enum class ParamGroup { kMotionEstimation, kMotionCodec, kContext, kContextualCodec, kIntra };

inline constexpr std::array<ParamGroup, 5> kAllParamGroups{
    ParamGroup::kMotionEstimation, ParamGroup::kMotionCodec, ParamGroup::kContext,
    ParamGroup::kContextualCodec, ParamGroup::kIntra};

std::string_view to_string(ParamGroup group);

// Small U-shaped network on the concatenated (current, reference) pair.
class MotionEstimatorImpl : public torch::nn::Module {
 public:
  explicit MotionEstimatorImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& current, const torch::Tensor& reference);

 private:
  torch::nn::Conv2d enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr};
  torch::nn::Conv2d dec2_{nullptr}, dec1_{nullptr}, head_{nullptr};
};
TORCH_MODULE(MotionEstimator);

class MotionCodecImpl : public torch::nn::Module {
 public:
  explicit MotionCodecImpl(const CodecConfig& config);

  torch::nn::Sequential analysis{nullptr};
  torch::nn::Sequential hyper_analysis{nullptr};
  torch::nn::Sequential hyper_synthesis{nullptr};
  torch::nn::Sequential synthesis{nullptr};
  FactorizedDensity density{nullptr};
};
TORCH_MODULE(MotionCodec);

class ContextModelImpl : public torch::nn::Module {
 public:
  explicit ContextModelImpl(int64_t channels);

  torch::nn::Sequential feature_extractor{nullptr};
  torch::nn::Sequential refine{nullptr};
};
TORCH_MODULE(ContextModel);

class ContextualCodecImpl : public torch::nn::Module {
 public:
  explicit ContextualCodecImpl(const CodecConfig& config);

  torch::nn::Sequential encoder{nullptr};
  torch::nn::Sequential hyper_analysis{nullptr};
  torch::nn::Sequential hyper_synthesis{nullptr};
  torch::nn::Sequential temporal_prior{nullptr};
  torch::nn::Sequential entropy_fusion{nullptr};
  torch::nn::Sequential decoder{nullptr};
  torch::nn::Sequential feature_fusion{nullptr};
  torch::nn::Conv2d recon_head{nullptr};
  FactorizedDensity density{nullptr};
};
TORCH_MODULE(ContextualCodec);

class IntraCodecImpl : public torch::nn::Module {
 public:
  explicit IntraCodecImpl(const CodecConfig& config);

  torch::nn::Sequential analysis{nullptr};
  torch::nn::Sequential hyper_analysis{nullptr};
  torch::nn::Sequential hyper_synthesis{nullptr};
  torch::nn::Sequential synthesis{nullptr};
  FactorizedDensity density{nullptr};
};
TORCH_MODULE(IntraCodec);

class ConditionalCodecImpl : public torch::nn::Module {
 public:
  explicit ConditionalCodecImpl(CodecConfig config);

  const CodecConfig& config() const { return config_; }

  // Inputs to the individual stages must already be padded to kPadMultiple;
  // forward_pframe and code_intra pad and crop themselves.
  torch::Tensor estimate_motion(const torch::Tensor& current, const ReferenceState& ref);

  MotionCoding code_motion(const torch::Tensor& flow, CodingMode mode,
                           std::optional<at::Generator> generator = std::nullopt);

  torch::Tensor extract_context(const ReferenceState& ref, const torch::Tensor& decoded_flow);

  ContextualCoding code_contextual(const torch::Tensor& current, const torch::Tensor& context,
                                   CodingMode mode,
                                   std::optional<at::Generator> generator = std::nullopt);

  IntraResult code_intra(const torch::Tensor& current, CodingMode mode,
                         std::optional<at::Generator> generator = std::nullopt);

  FrameResult forward_pframe(const torch::Tensor& current, const ReferenceState& ref,
                             CodingMode mode, StageId stage = StageId::kAll,
                             std::optional<at::Generator> generator = std::nullopt);

  std::vector<torch::Tensor> group_parameters(ParamGroup group) const;

  MotionEstimator motion_estimator{nullptr};
  MotionCodec motion_codec{nullptr};
  ContextModel context_model{nullptr};
  ContextualCodec contextual_codec{nullptr};
  IntraCodec intra_codec{nullptr};

 private:
  CodecConfig config_;
};
TORCH_MODULE(ConditionalCodec);

// Number of learnable scalars in `module` (all registered parameters,
// frozen or not).
int64_t count_parameters(const torch::nn::Module& module);

}  // namespace condvc
