#include "testing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <torch/torch.h>

#include "condvc/codec.hpp"
#include "condvc/errors.hpp"
#include "condvc/warp.hpp"

using namespace condvc;

namespace {

// Direct per-pixel bilinear sample with clamped coordinates.
double bilinear_oracle(const torch::TensorAccessor<double, 2>& img, double y, double x) {
  const auto h = img.size(0);
  const auto w = img.size(1);
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<int64_t>(std::floor(y));
  const auto x0 = static_cast<int64_t>(std::floor(x));
  const auto y1 = std::min(y0 + 1, h - 1);
  const auto x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img[y0][x0] + fx * img[y0][x1]) +
         fy * ((1 - fx) * img[y1][x0] + fx * img[y1][x1]);
}

ConditionalCodec small_codec() {
  torch::manual_seed(0);
  CodecConfig c;
  c.me_channels = 4;
  c.mv_transform_channels = 6;
  c.mv_latent_channels = 6;
  c.mv_hyper_channels = 4;
  c.context_channels = 6;
  c.transform_channels = 8;
  c.latent_channels = 8;
  c.hyper_channels = 4;
  c.prior_channels = 4;
  c.intra_transform_channels = 8;
  c.intra_latent_channels = 8;
  c.intra_hyper_channels = 4;
  return ConditionalCodec(c);
}

bool is_integral(const torch::Tensor& t) { return torch::equal(t, torch::round(t)); }

}  // namespace

TEST_CASE("warp: zero flow is the identity, bit for bit") {
  torch::manual_seed(1);
  auto ref = torch::rand({2, 5, 32, 48});
  auto out = warp(ref, torch::zeros({2, 2, 32, 48}));
  CHECK(torch::equal(out, ref));
}

TEST_CASE("warp: integer shift replicates the edge column") {
  auto ramp = torch::arange(8, torch::kFloat64).view({1, 1, 1, 8}).expand({1, 1, 4, 8}).contiguous();
  auto flow = torch::zeros({1, 2, 4, 8}, torch::kFloat64);
  flow.select(1, 0).fill_(1.0);
  auto out = warp(ramp, flow);
  auto expected = torch::tensor({1, 2, 3, 4, 5, 6, 7, 7}, torch::kFloat64).view({1, 1, 1, 8}).expand({1, 1, 4, 8});
  CHECK(torch::equal(out, expected));
}

TEST_CASE("warp: matches a per-pixel bilinear oracle and stays within the input range") {
  torch::manual_seed(2);
  const int64_t h = 12, w = 16;
  auto ref = torch::rand({1, 1, h, w}, torch::kFloat64);
  auto flow = torch::randn({1, 2, h, w}, torch::kFloat64) * 4;
  auto out = warp(ref, flow);
  auto ref_plane = ref[0][0].contiguous();
  auto flow_planes = flow[0].contiguous();
  auto out_plane = out[0][0].contiguous();
  auto img = ref_plane.accessor<double, 2>();
  auto fl = flow_planes.accessor<double, 3>();
  auto o = out_plane.accessor<double, 2>();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      REQUIRE(o[y][x] == doctest::Approx(bilinear_oracle(img, y + fl[1][y][x], x + fl[0][y][x])).epsilon(1e-12));
    }
  }
  const double lo = ref.min().item<double>(), hi = ref.max().item<double>();
  CHECK(out.min().item<double>() >= lo - 1e-12);
  CHECK(out.max().item<double>() <= hi + 1e-12);
}

TEST_CASE("warp: differentiable w.r.t. image and flow; shape mismatch throws") {
  auto ref = torch::rand({1, 3, 8, 8}, torch::kFloat64).requires_grad_(true);
  auto flow = (torch::rand({1, 2, 8, 8}, torch::kFloat64) + 0.25).requires_grad_(true);
  warp(ref, flow).sum().backward();
  CHECK(ref.grad().defined());
  CHECK(flow.grad().defined());
  CHECK(torch::isfinite(flow.grad()).all().item<bool>());
  CHECK_THROWS_AS(warp(torch::rand({1, 3, 8, 8}), torch::zeros({1, 2, 8, 9})), Error);
}

TEST_CASE("warp: non-finite flow is a numeric error") {
  auto flow = torch::zeros({1, 2, 8, 8});
  flow[0][1][3][4] = std::numeric_limits<float>::quiet_NaN();
  try {
    warp(torch::rand({1, 3, 8, 8}), flow);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kNumeric);
  }
}

TEST_CASE("pad_to_multiple replicates edges and crop_to undoes it") {
  auto x = torch::rand({1, 3, 50, 70});
  auto p = pad_to_multiple(x, 64);
  CHECK(p.size(2) == 64);
  CHECK(p.size(3) == 128);
  CHECK(torch::equal(crop_to(p, 50, 70), x));
  CHECK(torch::equal(p.select(3, 127), p.select(3, 69)));
}

TEST_CASE("CodecConfig validation") {
  CodecConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("lambda"), Error);
  c = CodecConfig{};
  c.extensions.hem_dual_prior = true;
  CHECK_THROWS_AS(ConditionalCodec{c}, Error);
  c = CodecConfig{};
  c.latent_channels = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("latent_channels"), Error);
}

TEST_CASE("count_parameters") {
  torch::nn::Linear affine(8, 4);
  CHECK(count_parameters(*affine) == 36);
  torch::nn::Sequential empty;
  CHECK(count_parameters(*empty) == 0);

  auto codec = small_codec();
  int64_t by_group = 0;
  for (auto g : kAllParamGroups) {
    for (auto& p : codec->group_parameters(g)) by_group += p.numel();
  }
  CHECK(by_group == count_parameters(*codec));
  CHECK(count_parameters(*ConditionalCodec(CodecConfig{})) <= 1'000'000);
  CHECK(count_parameters(*ConditionalCodec(CodecConfig::toy())) <= 10'000);
}

TEST_CASE("estimate_motion: shape contract, determinism, mismatch") {
  auto codec = small_codec();
  auto x = torch::rand({1, 3, 64, 64});
  ReferenceState ref{torch::rand({1, 3, 64, 64}), {}};
  auto a = codec->estimate_motion(x, ref);
  auto b = codec->estimate_motion(x, ref);
  CHECK(a.sizes() == torch::IntArrayRef({1, 2, 64, 64}));
  CHECK(torch::equal(a, b));
  CHECK_THROWS_AS(codec->estimate_motion(x, {torch::rand({1, 3, 64, 128}), {}}), Error);
}

TEST_CASE("code_motion: eval determinism, noise bound, nonnegative rates") {
  auto codec = small_codec();
  auto flow = torch::randn({1, 2, 64, 64}) * 2;
  auto a = codec->code_motion(flow, CodingMode::kEval);
  auto b = codec->code_motion(flow, CodingMode::kEval);
  CHECK(torch::equal(a.motion_latent, b.motion_latent));
  CHECK(torch::equal(a.motion_hyper, b.motion_hyper));
  CHECK(torch::equal(a.bits_motion, b.bits_motion));
  CHECK(is_integral(a.motion_latent));
  CHECK((a.bits_motion >= 0).all().item<bool>());
  CHECK((a.bits_motion_hyper >= 0).all().item<bool>());

  auto g = codec->motion_codec->analysis->forward(flow);
  auto noisy = codec->code_motion(flow, CodingMode::kTrainNoise, at::detail::createCPUGenerator(1));
  CHECK((noisy.motion_latent - g).abs().max().item<float>() < 0.5f);
  CHECK(noisy.decoded_flow.sizes() == flow.sizes());
}

TEST_CASE("extract_context: zero flow propagates the refined reference feature") {
  auto codec = small_codec();
  auto feature = torch::rand({1, 6, 64, 64});
  ReferenceState ref{torch::rand({1, 3, 64, 64}), feature};
  auto ctx = codec->extract_context(ref, torch::zeros({1, 2, 64, 64}));
  CHECK(ctx.size(1) == codec->config().context_channels);
  CHECK(torch::equal(ctx, codec->context_model->refine->forward(feature)));

  // Without a propagated feature the dedicated extractor runs on the reconstruction.
  ReferenceState first{ref.recon_frame, {}};
  auto from_frame = codec->extract_context(first, torch::zeros({1, 2, 64, 64}));
  auto expected = codec->context_model->refine->forward(
      codec->context_model->feature_extractor->forward(ref.recon_frame));
  CHECK(torch::equal(from_frame, expected));
  CHECK(torch::equal(from_frame, codec->extract_context(first, torch::zeros({1, 2, 64, 64}))));
}

TEST_CASE("forward_pframe: shape closure over resolutions") {
  auto codec = small_codec();
  for (int64_t h : {64, 128, 192}) {
    for (int64_t w : {64, 128, 192}) {
      auto x = torch::rand({1, 3, h, w});
      ReferenceState ref{torch::rand({1, 3, h, w}), {}};
      auto r = codec->forward_pframe(x, ref, CodingMode::kEval);
      CHECK(r.recon.sizes() == x.sizes());
      CHECK(r.warped.sizes() == x.sizes());
      CHECK(r.decoded_flow.sizes() == torch::IntArrayRef({1, 2, h, w}));
      CHECK(r.feature.sizes() == torch::IntArrayRef({1, 6, h, w}));
      CHECK(r.latents.motion.sizes() == torch::IntArrayRef({1, 6, h / 16, w / 16}));
      CHECK(r.latents.motion_hyper.sizes() == torch::IntArrayRef({1, 4, h / 64, w / 64}));
      CHECK(r.latents.content.sizes() == torch::IntArrayRef({1, 8, h / 16, w / 16}));
      CHECK(r.latents.content_hyper.sizes() == torch::IntArrayRef({1, 4, h / 64, w / 64}));
    }
  }
}

TEST_CASE("forward_pframe: unpadded input is padded and cropped back") {
  auto codec = small_codec();
  auto x = torch::rand({1, 3, 40, 72});
  ReferenceState ref{torch::rand({1, 3, 40, 72}), torch::rand({1, 6, 40, 72})};
  auto r = codec->forward_pframe(x, ref, CodingMode::kEval);
  CHECK(r.recon.sizes() == x.sizes());
  CHECK(r.rates.pixels == 40 * 72);
  CHECK(r.latents.content.size(2) == 64 / 16);
  CHECK(r.latents.content.size(3) == 128 / 16);
}

TEST_CASE("forward_pframe: eval contract") {
  auto codec = small_codec();
  auto x = torch::rand({2, 3, 64, 64});
  ReferenceState ref{torch::rand({2, 3, 64, 64}), {}};
  auto a = codec->forward_pframe(x, ref, CodingMode::kEval);
  auto b = codec->forward_pframe(x, ref, CodingMode::kEval);
  CHECK(torch::equal(a.recon, b.recon));
  CHECK(torch::equal(a.rates.bpp_total(), b.rates.bpp_total()));
  CHECK(is_integral(a.latents.motion));
  CHECK(is_integral(a.latents.motion_hyper));
  CHECK(is_integral(a.latents.content));
  CHECK(is_integral(a.latents.content_hyper));
  CHECK(a.recon.min().item<float>() >= 0.0f);
  CHECK(a.recon.max().item<float>() <= 1.0f);
  CHECK(!a.recon.requires_grad());
  CHECK(torch::allclose(a.rates.bpp_content(), a.rates.bits_content / (64.0 * 64.0)));
  CHECK(torch::allclose(a.rates.bpp_total(), a.rates.bpp_motion() + a.rates.bpp_motion_hyper() +
                                                 a.rates.bpp_content() + a.rates.bpp_content_hyper()));
  CHECK(a.distortion_warped.sizes() == torch::IntArrayRef({2}));
  CHECK(a.content_rates_used);
  auto me = codec->forward_pframe(x, ref, CodingMode::kEval, StageId::kMe);
  CHECK(!me.content_rates_used);
  CHECK(me.rates.bits_content.defined());
}

TEST_CASE("forward_pframe: quantizer wiring per mode") {
  auto codec = small_codec();
  auto x = torch::rand({1, 3, 64, 64});
  ReferenceState ref{torch::rand({1, 3, 64, 64}), {}};
  auto train = codec->forward_pframe(x, ref, CodingMode::kTrainSte);
  REQUIRE(train.quant.size() == 4);
  for (const auto& q : train.quant) {
    CHECK(q.rate_variant == QuantVariant::kNoise);
    CHECK(q.synthesis_variant == QuantVariant::kSte);
  }
  // Synthesis consumes rounded values; the rate path consumed noisy ones.
  CHECK(is_integral(train.latents.content));
  auto eval = codec->forward_pframe(x, ref, CodingMode::kEval);
  for (const auto& q : eval.quant) {
    CHECK(q.rate_variant == QuantVariant::kHard);
    CHECK(q.synthesis_variant == QuantVariant::kHard);
  }
}

TEST_CASE("forward_pframe: every parameter gets a finite gradient in both training modes") {
  auto codec = small_codec();
  auto x = torch::rand({1, 3, 64, 64});
  for (auto mode : {CodingMode::kTrainNoise, CodingMode::kTrainSte}) {
    codec->zero_grad();
    auto intra = codec->code_intra(torch::rand({1, 3, 64, 64}), mode);
    auto r = codec->forward_pframe(x, intra.next_reference(), mode);
    auto loss = 256.0 * (r.distortion_recon + r.distortion_warped + intra.distortion).mean() +
                r.rates.bpp_total().mean() + intra.rates.bpp_total().mean();
    loss.backward();
    for (const auto& item : codec->named_parameters()) {
      INFO(item.key());
      REQUIRE(item.value().grad().defined());
      CHECK(torch::isfinite(item.value().grad()).all().item<bool>());
    }
  }
}

TEST_CASE("code_intra: eval determinism, range, bpp definition") {
  auto codec = small_codec();
  auto x = torch::rand({1, 3, 64, 96});
  auto a = codec->code_intra(x, CodingMode::kEval);
  auto b = codec->code_intra(x, CodingMode::kEval);
  CHECK(torch::equal(a.recon, b.recon));
  CHECK(a.recon.sizes() == x.sizes());
  CHECK(a.recon.min().item<float>() >= 0.0f);
  CHECK(a.recon.max().item<float>() <= 1.0f);
  CHECK(a.rates.pixels == 64 * 96);
  CHECK((a.rates.bpp_total() > 0).all().item<bool>());
  CHECK(torch::equal(a.rates.bits_motion, torch::zeros_like(a.rates.bits_motion)));
}
