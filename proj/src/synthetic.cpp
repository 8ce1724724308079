#include "condvc/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <torch/torch.h>

#include "condvc/errors.hpp"
#include "condvc/image_io.hpp"

namespace condvc {

namespace {

std::string numbered(const char* prefix, int64_t n, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%04lld%s", prefix, static_cast<long long>(n), suffix);
  return buf;
}

}  // namespace

torch::Tensor synthetic_clip(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.frames < 1 || spec.height < 1 || spec.width < 1 || spec.components < 1) {
    fail(ErrorCategory::kConfig, "synthetic clip dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto speed = [&] { return (2.0 * unit(rng) - 1.0) * spec.max_speed; };
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto ys = torch::arange(spec.height, opts).view({spec.height, 1});
  auto xs = torch::arange(spec.width, opts).view({1, spec.width});

  const double vx = speed(), vy = speed();
  struct Wave {
    double fx, fy, phase, amp;
    double weight[3];
  };
  std::vector<Wave> waves(spec.components);
  for (auto& w : waves) {
    const double period = 6.0 + 26.0 * unit(rng);
    const double angle = kTwoPi * unit(rng);
    w.fx = std::cos(angle) / period;
    w.fy = std::sin(angle) / period;
    w.phase = kTwoPi * unit(rng);
    w.amp = 0.5 + 0.5 * unit(rng);
    for (double& c : w.weight) c = 0.3 + 0.7 * unit(rng);
  }
  const double disc_r = 0.12 * std::min(spec.height, spec.width) + 4.0 * unit(rng);
  const double disc_x = spec.width * unit(rng), disc_y = spec.height * unit(rng);
  const double disc_vx = speed(), disc_vy = speed();
  double disc_colour[3];
  for (double& c : disc_colour) c = unit(rng);

  double norm = 0.0;
  for (const auto& w : waves) norm += w.amp;

  auto clip = torch::empty({spec.frames, 3, spec.height, spec.width}, torch::kFloat32);
  for (int64_t t = 0; t < spec.frames; ++t) {
    const double ox = vx * static_cast<double>(t), oy = vy * static_cast<double>(t);
    std::vector<torch::Tensor> channels(3, torch::zeros({spec.height, spec.width}, opts));
    for (const auto& w : waves) {
      auto s = torch::sin(kTwoPi * (w.fx * (xs - ox) + w.fy * (ys - oy)) + w.phase) * w.amp;
      for (int c = 0; c < 3; ++c) channels[c] = channels[c] + s * w.weight[c];
    }
    const double cx = disc_x + disc_vx * t, cy = disc_y + disc_vy * t;
    auto dist = torch::sqrt((xs - cx).pow(2) + (ys - cy).pow(2));
    auto alpha = torch::sigmoid((disc_r - dist) * 1.5);
    for (int c = 0; c < 3; ++c) {
      auto bg = 0.5 + 0.4 * channels[c] / norm;
      clip[t][c].copy_(bg * (1.0 - alpha) + alpha * disc_colour[c]);
    }
  }
  return clip.clamp_(0.0, 1.0);
}

std::vector<torch::Tensor> synthetic_clips(int64_t count, const SyntheticSpec& spec, uint64_t seed) {
  std::vector<torch::Tensor> clips;
  clips.reserve(count);
  for (int64_t i = 0; i < count; ++i) clips.push_back(synthetic_clip(spec, seed * 7919 + i));
  return clips;
}

std::filesystem::path write_synthetic_dataset(const std::filesystem::path& root, int64_t count,
                                              const SyntheticSpec& spec, uint64_t seed) {
  std::filesystem::create_directories(root);
  const auto index = root / "index.txt";
  std::ofstream out(index);
  if (!out) fail(ErrorCategory::kIo, "cannot write '" + index.string() + "'");
  const auto clips = synthetic_clips(count, spec, seed);
  for (int64_t i = 0; i < count; ++i) {
    const auto name = numbered("clip_", i, "");
    std::filesystem::create_directories(root / name);
    for (int64_t t = 0; t < spec.frames; ++t) {
      write_png(root / name / numbered("frame_", t + 1, ".png"), clips[i][t]);
    }
    out << name << '\n';
  }
  return index;
}

}  // namespace condvc
