#include "condvc/codec.hpp"

#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "condvc/errors.hpp"
#include "condvc/warp.hpp"

namespace condvc {

namespace nn = torch::nn;

namespace {

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)); }

constexpr double kIdentityResidualScale = 0.1;
constexpr double kContentLatentGain = 3.0;

void require_positive(int64_t value, const char* name) {
  if (value < 1) fail(ErrorCategory::kConfig, std::string("codec.") + name + " must be >= 1");
}

void require_padded(const torch::Tensor& x, const char* what) {
  if (x.dim() != 4 || x.size(2) % kPadMultiple != 0 || x.size(3) % kPadMultiple != 0) {
    fail(ErrorCategory::kShape, std::string(what) + ": expected [N, C, H, W] with H, W multiples of " +
                                    std::to_string(kPadMultiple) + ", got " + c10::str(x.sizes()));
  }
}

void require_frames(const torch::Tensor& x, const char* what) {
  if (x.dim() != 4 || x.size(1) != 3) {
    fail(ErrorCategory::kShape,
         std::string(what) + ": expected [N, 3, H, W], got " + c10::str(x.sizes()));
  }
}

std::pair<torch::Tensor, torch::Tensor> split_params(const torch::Tensor& params) {
  auto parts = params.chunk(2, 1);
  return {parts[0], parts[1]};
}

void append(std::vector<torch::Tensor>& out, const nn::Module& module) {
  auto params = module.parameters();
  out.insert(out.end(), params.begin(), params.end());
}

}  // namespace

std::string_view to_string(StageId stage) {
  switch (stage) {
    case StageId::kMe: return "me";
    case StageId::kReconstruction: return "reconstruction";
    case StageId::kContextualCoding: return "contextual_coding";
    case StageId::kAll: return "all";
    case StageId::kFinetune: return "finetune";
  }
  return "?";
}

StageId parse_stage(std::string_view name) {
  for (auto stage : kAllStages) {
    if (to_string(stage) == name) return stage;
  }
  fail(ErrorCategory::kConfig, "unknown stage '" + std::string(name) +
                                   "' (expected me, reconstruction, contextual_coding, all, finetune)");
}

int stage_index(StageId stage) { return static_cast<int>(stage); }

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kMotionEstimation: return "motion_estimation";
    case ParamGroup::kMotionCodec: return "motion_codec";
    case ParamGroup::kContext: return "context";
    case ParamGroup::kContextualCodec: return "contextual_codec";
    case ParamGroup::kIntra: return "intra";
  }
  return "?";
}

void CodecConfig::validate() const {
  require_positive(me_channels, "me_channels");
  require_positive(mv_transform_channels, "mv_transform_channels");
  require_positive(mv_latent_channels, "mv_latent_channels");
  require_positive(mv_hyper_channels, "mv_hyper_channels");
  require_positive(context_channels, "context_channels");
  require_positive(transform_channels, "transform_channels");
  require_positive(latent_channels, "latent_channels");
  require_positive(hyper_channels, "hyper_channels");
  require_positive(prior_channels, "prior_channels");
  require_positive(intra_transform_channels, "intra_transform_channels");
  require_positive(intra_latent_channels, "intra_latent_channels");
  require_positive(intra_hyper_channels, "intra_hyper_channels");
  for (auto f : density_filters) require_positive(f, "density_filters[]");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    fail(ErrorCategory::kConfig, "codec.lambda must be a positive finite number, got " +
                                     std::to_string(lambda));
  }
  if (extensions.tcm_multiscale || extensions.hem_dual_prior || extensions.dc_quadtree) {
    fail(ErrorCategory::kConfig,
         "codec.extensions: tcm_multiscale, hem_dual_prior and dc_quadtree are reserved and must be false");
  }
}

CodecConfig CodecConfig::toy() {
  CodecConfig c;
  c.me_channels = 2;
  c.mv_transform_channels = 2;
  c.mv_latent_channels = 2;
  c.mv_hyper_channels = 2;
  c.context_channels = 2;
  c.transform_channels = 3;
  c.latent_channels = 3;
  c.hyper_channels = 2;
  c.prior_channels = 2;
  c.intra_transform_channels = 3;
  c.intra_latent_channels = 3;
  c.intra_hyper_channels = 2;
  c.density_filters = {2, 2};
  return c;
}

torch::Tensor mse_per_sample(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).square().reshape({a.size(0), -1}).mean(1);
}

MotionEstimatorImpl::MotionEstimatorImpl(int64_t c)
    : enc1_(register_module("enc1", conv(6, c))),
      enc2_(register_module("enc2", conv(c, 2 * c, 3, 2))),
      enc3_(register_module("enc3", conv(2 * c, 2 * c, 3, 2))),
      dec2_(register_module("dec2", conv(4 * c, 2 * c))),
      dec1_(register_module("dec1", conv(3 * c, c))),
      head_(register_module("head", conv(c, 2))) {}

torch::Tensor MotionEstimatorImpl::forward(const torch::Tensor& current,
                                           const torch::Tensor& reference) {
  namespace F = torch::nn::functional;
  auto up = [](const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
  };
  auto e1 = torch::leaky_relu(enc1_(torch::cat({current, reference}, 1)), kLeakySlope);
  auto e2 = torch::leaky_relu(enc2_(e1), kLeakySlope);
  auto e3 = torch::leaky_relu(enc3_(e2), kLeakySlope);
  auto d2 = torch::leaky_relu(dec2_(torch::cat({up(e3), e2}, 1)), kLeakySlope);
  auto d1 = torch::leaky_relu(dec1_(torch::cat({up(d2), e1}, 1)), kLeakySlope);
  return head_(d1);
}

MotionCodecImpl::MotionCodecImpl(const CodecConfig& c) {
  analysis = register_module(
      "analysis", analysis_transform(2, c.mv_transform_channels, c.mv_latent_channels, 4));
  hyper_analysis = register_module(
      "hyper_analysis", condvc::hyper_analysis(c.mv_latent_channels, c.mv_hyper_channels,
                                               c.mv_hyper_channels));
  hyper_synthesis = register_module(
      "hyper_synthesis", condvc::hyper_synthesis(c.mv_hyper_channels, c.mv_hyper_channels,
                                                 2 * c.mv_latent_channels));
  synthesis = register_module(
      "synthesis", synthesis_transform(c.mv_latent_channels, c.mv_transform_channels, 2, 4));
  density = register_module("density", FactorizedDensity(c.mv_hyper_channels, c.density_filters));
}

ContextModelImpl::ContextModelImpl(int64_t c) {
  // The first three feature channels start as RGB and the rest of the path copies them, so a fresh
  // model reconstructs the warped reference and training learns the correction.
  const auto rgb = std::min<int64_t>(3, c);
  auto extract = conv(3, c);
  identity_init(extract, 0, rgb, kIdentityResidualScale);
  auto refine_in = conv(c, c);
  identity_init(refine_in, 0, c, kIdentityResidualScale);
  feature_extractor = register_module("feature_extractor", nn::Sequential(extract, leaky(), ResBlock(c)));
  refine = register_module("refine", nn::Sequential(refine_in, leaky(), ResBlock(c)));
}

ContextualCodecImpl::ContextualCodecImpl(const CodecConfig& c) {
  const auto ctx = c.context_channels;
  // Most fresh content symbols land outside the rounding dead zone, so the decoder has a signal to
  // learn from before the rate term starts pulling latents towards zero.
  encoder = register_module("encoder", analysis_transform(3 + ctx, c.transform_channels, c.latent_channels,
                                                          4, kContentLatentGain));
  hyper_analysis = register_module(
      "hyper_analysis",
      condvc::hyper_analysis(c.latent_channels, c.hyper_channels, c.hyper_channels));
  hyper_synthesis = register_module(
      "hyper_synthesis",
      condvc::hyper_synthesis(c.hyper_channels, c.hyper_channels, c.latent_channels));
  temporal_prior = register_module(
      "temporal_prior", analysis_transform(ctx, c.prior_channels, c.latent_channels, 4));
  entropy_fusion = register_module(
      "entropy_fusion", nn::Sequential(conv(2 * c.latent_channels, 2 * c.latent_channels, 1), leaky(),
                                       conv(2 * c.latent_channels, 2 * c.latent_channels, 1)));
  decoder = register_module(
      "decoder", synthesis_transform(c.latent_channels, c.transform_channels, ctx, 4));
  auto fuse = conv(2 * ctx, ctx);
  identity_init(fuse, ctx, ctx, kIdentityResidualScale);
  {
    // The decoded half keeps its default scale. A weak latent path lets the encoder settle inside
    // the rounding dead zone, after which the decoder only ever sees zeros.
    torch::NoGradGuard guard;
    fuse->weight.narrow(1, 0, ctx).div_(kIdentityResidualScale);
  }
  feature_fusion = register_module("feature_fusion", nn::Sequential(fuse, leaky(), ResBlock(ctx)));
  recon_head = register_module("recon_head", conv(ctx, 3));
  identity_init(recon_head, 0, std::min<int64_t>(3, ctx), kIdentityResidualScale);
  density = register_module("density", FactorizedDensity(c.hyper_channels, c.density_filters));
}

IntraCodecImpl::IntraCodecImpl(const CodecConfig& c) {
  analysis = register_module(
      "analysis", analysis_transform(3, c.intra_transform_channels, c.intra_latent_channels, 4));
  hyper_analysis = register_module(
      "hyper_analysis", condvc::hyper_analysis(c.intra_latent_channels, c.intra_hyper_channels,
                                               c.intra_hyper_channels));
  hyper_synthesis = register_module(
      "hyper_synthesis", condvc::hyper_synthesis(c.intra_hyper_channels, c.intra_hyper_channels,
                                                 2 * c.intra_latent_channels));
  synthesis = register_module(
      "synthesis", synthesis_transform(c.intra_latent_channels, c.intra_transform_channels, 3, 4));
  density = register_module("density", FactorizedDensity(c.intra_hyper_channels, c.density_filters));
}

ConditionalCodecImpl::ConditionalCodecImpl(CodecConfig config) : config_(std::move(config)) {
  config_.validate();
  motion_estimator = register_module("motion_estimator", MotionEstimator(config_.me_channels));
  motion_codec = register_module("motion_codec", MotionCodec(config_));
  context_model = register_module("context_model", ContextModel(config_.context_channels));
  contextual_codec = register_module("contextual_codec", ContextualCodec(config_));
  intra_codec = register_module("intra_codec", IntraCodec(config_));
}

torch::Tensor ConditionalCodecImpl::estimate_motion(const torch::Tensor& current,
                                                    const ReferenceState& ref) {
  require_frames(current, "estimate_motion");
  if (!ref.recon_frame.defined() || ref.recon_frame.sizes() != current.sizes()) {
    fail(ErrorCategory::kShape, "estimate_motion: current " + c10::str(current.sizes()) +
                                    " and reference " +
                                    (ref.recon_frame.defined() ? c10::str(ref.recon_frame.sizes())
                                                               : std::string("<none>")) +
                                    " differ");
  }
  return motion_estimator(current, ref.recon_frame);
}

MotionCoding ConditionalCodecImpl::code_motion(const torch::Tensor& flow, CodingMode mode,
                                               std::optional<at::Generator> generator) {
  require_padded(flow, "code_motion");
  if (flow.size(1) != 2) fail(ErrorCategory::kShape, "code_motion: flow must have 2 channels");
  std::optional<torch::NoGradGuard> no_grad;
  if (mode == CodingMode::kEval) no_grad.emplace();

  auto& mc = *motion_codec;
  auto g = mc.analysis->forward(flow);
  auto s = mc.hyper_analysis->forward(g);

  auto s_q = quantize_latent(s, mode, generator);
  auto [loc, raw_scale] = split_params(mc.hyper_synthesis->forward(s_q.for_synthesis));
  auto g_q = quantize_latent(g, mode, generator);

  MotionCoding out;
  out.bits_motion = per_sample(element_bits(g_q.for_rate, {loc, raw_scale, config_.entropy_family}));
  out.bits_motion_hyper = per_sample(factorized_element_bits(s_q.for_rate, mc.density));
  out.decoded_flow = mc.synthesis->forward(g_q.for_synthesis);
  out.motion_latent = g_q.for_synthesis;
  out.motion_hyper = s_q.for_synthesis;
  out.quant = {{"motion", g_q.rate_variant, g_q.synthesis_variant},
               {"motion_hyper", s_q.rate_variant, s_q.synthesis_variant}};
  return out;
}

torch::Tensor ConditionalCodecImpl::extract_context(const ReferenceState& ref,
                                                    const torch::Tensor& decoded_flow) {
  auto feature = ref.recon_feature.defined()
                     ? ref.recon_feature
                     : context_model->feature_extractor->forward(ref.recon_frame);
  return context_model->refine->forward(warp(feature, decoded_flow));
}

ContextualCoding ConditionalCodecImpl::code_contextual(const torch::Tensor& current,
                                                       const torch::Tensor& context,
                                                       CodingMode mode,
                                                       std::optional<at::Generator> generator) {
  require_padded(current, "code_contextual");
  if (context.dim() != 4 || context.size(2) != current.size(2) ||
      context.size(3) != current.size(3) || context.size(1) != config_.context_channels) {
    fail(ErrorCategory::kShape, "code_contextual: context " + c10::str(context.sizes()) +
                                    " not aligned with frame " + c10::str(current.sizes()));
  }
  std::optional<torch::NoGradGuard> no_grad;
  if (mode == CodingMode::kEval) no_grad.emplace();

  auto& cc = *contextual_codec;
  auto y = cc.encoder->forward(torch::cat({current, context}, 1));
  auto z = cc.hyper_analysis->forward(y);

  auto z_q = quantize_latent(z, mode, generator);
  auto hyper = cc.hyper_synthesis->forward(z_q.for_synthesis);
  auto prior = cc.temporal_prior->forward(context);
  auto [loc, raw_scale] = split_params(cc.entropy_fusion->forward(torch::cat({hyper, prior}, 1)));
  auto y_q = quantize_latent(y, mode, generator);

  ContextualCoding out;
  out.bits_content = per_sample(element_bits(y_q.for_rate, {loc, raw_scale, config_.entropy_family}));
  out.bits_content_hyper = per_sample(factorized_element_bits(z_q.for_rate, cc.density));
  auto decoded = cc.decoder->forward(y_q.for_synthesis);
  out.feature = cc.feature_fusion->forward(torch::cat({decoded, context}, 1));
  out.recon = cc.recon_head->forward(out.feature);
  if (mode == CodingMode::kEval) out.recon = out.recon.clamp(0.0, 1.0);
  out.content_latent = y_q.for_synthesis;
  out.content_hyper = z_q.for_synthesis;
  out.quant = {{"content", y_q.rate_variant, y_q.synthesis_variant},
               {"content_hyper", z_q.rate_variant, z_q.synthesis_variant}};
  return out;
}

IntraResult ConditionalCodecImpl::code_intra(const torch::Tensor& current, CodingMode mode,
                                             std::optional<at::Generator> generator) {
  require_frames(current, "code_intra");
  std::optional<torch::NoGradGuard> no_grad;
  if (mode == CodingMode::kEval) no_grad.emplace();

  const auto h = current.size(2);
  const auto w = current.size(3);
  auto x = pad_to_multiple(current, kPadMultiple);

  auto& ic = *intra_codec;
  auto y = ic.analysis->forward(x);
  auto z = ic.hyper_analysis->forward(y);
  auto z_q = quantize_latent(z, mode, generator);
  auto [loc, raw_scale] = split_params(ic.hyper_synthesis->forward(z_q.for_synthesis));
  auto y_q = quantize_latent(y, mode, generator);

  IntraResult out;
  out.rates.pixels = h * w;
  out.rates.bits_content = per_sample(element_bits(y_q.for_rate, {loc, raw_scale, config_.entropy_family}));
  out.rates.bits_content_hyper = per_sample(factorized_element_bits(z_q.for_rate, ic.density));
  out.rates.bits_motion = torch::zeros_like(out.rates.bits_content);
  out.rates.bits_motion_hyper = torch::zeros_like(out.rates.bits_content);
  out.recon = crop_to(ic.synthesis->forward(y_q.for_synthesis), h, w);
  if (mode == CodingMode::kEval) out.recon = out.recon.clamp(0.0, 1.0);
  out.distortion = mse_per_sample(current, out.recon);
  out.latent = y_q.for_synthesis;
  out.hyper = z_q.for_synthesis;
  out.quant = {{"intra", y_q.rate_variant, y_q.synthesis_variant},
               {"intra_hyper", z_q.rate_variant, z_q.synthesis_variant}};
  return out;
}

FrameResult ConditionalCodecImpl::forward_pframe(const torch::Tensor& current,
                                                 const ReferenceState& ref, CodingMode mode,
                                                 StageId stage,
                                                 std::optional<at::Generator> generator) {
  require_frames(current, "forward_pframe");
  if (!ref.recon_frame.defined()) {
    fail(ErrorCategory::kShape, "forward_pframe: reference state has no reconstruction");
  }
  std::optional<torch::NoGradGuard> no_grad;
  if (mode == CodingMode::kEval) no_grad.emplace();

  const auto h = current.size(2);
  const auto w = current.size(3);
  ReferenceState padded_ref{pad_to_multiple(ref.recon_frame, kPadMultiple), {}};
  if (ref.recon_feature.defined()) {
    padded_ref.recon_feature = pad_to_multiple(ref.recon_feature, kPadMultiple);
  }
  auto x = pad_to_multiple(current, kPadMultiple);

  auto flow = estimate_motion(x, padded_ref);
  auto motion = code_motion(flow, mode, generator);
  auto warped = warp(padded_ref.recon_frame, motion.decoded_flow);
  auto context = extract_context(padded_ref, motion.decoded_flow);
  auto content = code_contextual(x, context, mode, generator);

  FrameResult out;
  out.recon = crop_to(content.recon, h, w);
  out.warped = crop_to(warped, h, w);
  out.decoded_flow = crop_to(motion.decoded_flow, h, w);
  out.feature = crop_to(content.feature, h, w);
  out.latents = {motion.motion_latent, motion.motion_hyper, content.content_latent,
                 content.content_hyper};
  out.rates = {motion.bits_motion, motion.bits_motion_hyper, content.bits_content,
               content.bits_content_hyper, h * w};
  out.distortion_warped = mse_per_sample(current, out.warped);
  out.distortion_recon = mse_per_sample(current, out.recon);
  out.content_rates_used = stage != StageId::kMe;
  out.quant = motion.quant;
  out.quant.insert(out.quant.end(), content.quant.begin(), content.quant.end());
  return out;
}

std::vector<torch::Tensor> ConditionalCodecImpl::group_parameters(ParamGroup group) const {
  std::vector<torch::Tensor> out;
  switch (group) {
    case ParamGroup::kMotionEstimation: append(out, *motion_estimator); break;
    case ParamGroup::kMotionCodec: append(out, *motion_codec); break;
    case ParamGroup::kContext: append(out, *context_model); break;
    case ParamGroup::kContextualCodec: append(out, *contextual_codec); break;
    case ParamGroup::kIntra: append(out, *intra_codec); break;
  }
  return out;
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace condvc
