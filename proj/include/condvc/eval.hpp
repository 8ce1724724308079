#pragma once

// Low-delay sequence coding, per-frame metrics and rate-distortion curves.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "condvc/codec.hpp"

namespace condvc {

inline constexpr double kPsnrCap = 100.0;

// -10 log10(mse) for signals in [0, 1]; kPsnrCap when mse == 0.
double psnr_from_mse(double mse);

// MSE over all channels and pixels jointly. Throws Error(kShape) on mismatch.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

enum class FrameType { kIntra, kPredicted };
std::string_view to_string(FrameType type);

struct FrameMetrics {
  std::string sequence_id;
  int64_t frame_index = 0;
  FrameType type = FrameType::kIntra;
  double bpp_motion = 0.0;
  double bpp_motion_hyper = 0.0;
  double bpp_content = 0.0;
  double bpp_content_hyper = 0.0;
  double bpp_total = 0.0;
  double psnr = 0.0;
  double encode_time_s = 0.0;  // forward pass only; no entropy coding exists

  // Timing is wall-clock and therefore omitted unless requested.
  nlohmann::json to_json(bool include_time) const;
};

bool is_intra_frame(int64_t t, int64_t intra_period);

struct EncodeOptions {
  int64_t intra_period = 32;
  int64_t n_frames = 96;
  // Called after frame t has been coded, with mutable access to the source.
  std::function<void(int64_t, VideoSequence&)> after_frame;
};

// Codes the first n_frames frames in display order; frame t is intra iff
// t % intra_period == 0 and every P-frame references the previous
// reconstruction. A shorter video is coded in full with a warning on stderr.
std::vector<FrameMetrics> encode_sequence(ConditionalCodec& model, VideoSequence& video,
                                          const EncodeOptions& options = {});

struct RDPoint {
  double bpp = 0.0;
  double psnr = 0.0;
  double lambda = 0.0;
};

struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;  // ascending bpp

  void sort_by_rate();
};

// Per-video mean of per-frame values, then the unweighted mean over videos.
RDPoint average_point(const std::vector<std::vector<FrameMetrics>>& per_video, double lambda);

// One point per model, sorted by bpp.
RDCurve build_rd_curve(const std::vector<std::pair<double, ConditionalCodec>>& models,
                       const std::vector<VideoSequence>& videos, const EncodeOptions& options,
                       std::string label);

// CSV with header "lambda,bpp,psnr". Errors name the offending line.
RDCurve read_rd_csv(const std::filesystem::path& path);
void write_rd_csv(const std::filesystem::path& path, const RDCurve& curve);

void write_metrics_jsonl(const std::filesystem::path& path, const std::vector<FrameMetrics>& metrics,
                         bool include_time);

// sequence,frames,intra_frames,bpp,psnr per sequence.
void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<std::vector<FrameMetrics>>& per_video);

struct BenchmarkReport {
  std::vector<std::pair<std::string, double>> bd_rates;  // dataset -> percent
  double average_bd_rate = 0.0;                           // arithmetic mean of bd_rates
  int64_t parameter_count = -1;                           // -1: not measured
  double mean_time_s = -1.0;
  int64_t peak_memory_bytes = -1;

  void finalize();
  nlohmann::json to_json() const;
  std::string to_table() const;
};

}  // namespace condvc
