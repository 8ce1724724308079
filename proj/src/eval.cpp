#include "condvc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <torch/torch.h>

#include "condvc/errors.hpp"

namespace condvc {

double psnr_from_mse(double mse) {
  if (!(mse >= 0.0)) fail(ErrorCategory::kNumeric, "MSE must be non-negative, got " + std::to_string(mse));
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) {
    fail(ErrorCategory::kShape, "psnr operands differ in shape: " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
  }
  const auto mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  return psnr_from_mse(mse);
}

std::string_view to_string(FrameType type) { return type == FrameType::kIntra ? "I" : "P"; }

nlohmann::json FrameMetrics::to_json(bool include_time) const {
  nlohmann::json j = {{"sequence", sequence_id},
                      {"frame", frame_index},
                      {"type", std::string(to_string(type))},
                      {"bpp_motion", bpp_motion},
                      {"bpp_motion_hyper", bpp_motion_hyper},
                      {"bpp_content", bpp_content},
                      {"bpp_content_hyper", bpp_content_hyper},
                      {"bpp_total", bpp_total},
                      {"psnr", psnr}};
  if (include_time) j["encode_time_s"] = encode_time_s;
  return j;
}

bool is_intra_frame(int64_t t, int64_t intra_period) {
  if (intra_period < 1) fail(ErrorCategory::kConfig, "intra_period must be >= 1");
  return t % intra_period == 0;
}

std::vector<FrameMetrics> encode_sequence(ConditionalCodec& model, VideoSequence& video,
                                          const EncodeOptions& options) {
  if (options.intra_period < 1) fail(ErrorCategory::kConfig, "intra_period must be >= 1");
  if (options.n_frames < 1) fail(ErrorCategory::kConfig, "n_frames must be >= 1");
  if (video.frames.empty()) fail(ErrorCategory::kData, "sequence '" + video.source_id + "' has no frames");
  auto n = options.n_frames;
  if (static_cast<int64_t>(video.frames.size()) < n) {
    std::cerr << "warning: sequence '" << video.source_id << "' has " << video.frames.size() << " frames, "
              << n << " requested; coding all available frames\n";
    n = static_cast<int64_t>(video.frames.size());
  }

  torch::NoGradGuard no_grad;
  std::vector<FrameMetrics> out;
  out.reserve(n);
  ReferenceState ref;
  for (int64_t t = 0; t < n; ++t) {
    const auto x = video.frames[t].pixels.unsqueeze(0);
    FrameMetrics m;
    m.sequence_id = video.source_id;
    m.frame_index = t;
    torch::Tensor recon;
    RateBreakdown rates;
    const auto start = std::chrono::steady_clock::now();
    if (is_intra_frame(t, options.intra_period)) {
      auto result = model->code_intra(x, CodingMode::kEval);
      recon = result.recon;
      rates = result.rates;
      ref = result.next_reference();
      m.type = FrameType::kIntra;
    } else {
      auto result = model->forward_pframe(x, ref, CodingMode::kEval, StageId::kAll);
      recon = result.recon;
      rates = result.rates;
      ref = result.next_reference();
      m.type = FrameType::kPredicted;
    }
    m.encode_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m.bpp_motion = rates.bpp_motion().item<double>();
    m.bpp_motion_hyper = rates.bpp_motion_hyper().item<double>();
    m.bpp_content = rates.bpp_content().item<double>();
    m.bpp_content_hyper = rates.bpp_content_hyper().item<double>();
    m.bpp_total = m.bpp_motion + m.bpp_motion_hyper + m.bpp_content + m.bpp_content_hyper;
    if (!std::isfinite(m.bpp_total) || !torch::isfinite(recon).all().item<bool>()) {
      fail(ErrorCategory::kNumeric, "non-finite model output at frame " + std::to_string(t) + " of '" +
                                        video.source_id + "'");
    }
    m.psnr = psnr(recon[0], x[0]);
    out.push_back(m);
    if (options.after_frame) options.after_frame(t, video);
  }
  return out;
}

void RDCurve::sort_by_rate() {
  std::stable_sort(points.begin(), points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
}

RDPoint average_point(const std::vector<std::vector<FrameMetrics>>& per_video, double lambda) {
  if (per_video.empty()) fail(ErrorCategory::kData, "no videos to average");
  RDPoint point{0.0, 0.0, lambda};
  for (const auto& frames : per_video) {
    if (frames.empty()) fail(ErrorCategory::kData, "video without frame metrics");
    double bpp = 0.0, quality = 0.0;
    for (const auto& f : frames) {
      bpp += f.bpp_total;
      quality += f.psnr;
    }
    point.bpp += bpp / static_cast<double>(frames.size());
    point.psnr += quality / static_cast<double>(frames.size());
  }
  point.bpp /= static_cast<double>(per_video.size());
  point.psnr /= static_cast<double>(per_video.size());
  return point;
}

RDCurve build_rd_curve(const std::vector<std::pair<double, ConditionalCodec>>& models,
                       const std::vector<VideoSequence>& videos, const EncodeOptions& options, std::string label) {
  RDCurve curve;
  curve.label = std::move(label);
  for (const auto& [lambda, model] : models) {
    auto m = model;
    std::vector<std::vector<FrameMetrics>> per_video;
    for (auto video : videos) per_video.push_back(encode_sequence(m, video, options));
    curve.points.push_back(average_point(per_video, lambda));
  }
  curve.sort_by_rate();
  return curve;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& text, const std::filesystem::path& path, int line) {
  size_t used = 0;
  double v = 0.0;
  const auto t = trim(text);
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v)) {
    fail(ErrorCategory::kData, path.string() + ":" + std::to_string(line) + ": '" + t + "' is not a number");
  }
  return v;
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace

RDCurve read_rd_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::kIo, "cannot read RD curve '" + path.string() + "'");
  RDCurve curve;
  curve.label = path.stem().string();
  std::string line;
  int number = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      std::string lower = line;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      lower.erase(std::remove(lower.begin(), lower.end(), ' '), lower.end());
      if (lower != "lambda,bpp,psnr") {
        fail(ErrorCategory::kData, path.string() + ":" + std::to_string(number) +
                                       ": expected header 'lambda,bpp,psnr'");
      }
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3) {
      fail(ErrorCategory::kData, path.string() + ":" + std::to_string(number) + ": expected 3 fields, got " +
                                     std::to_string(cells.size()));
    }
    RDPoint p{parse_number(cells[1], path, number), parse_number(cells[2], path, number),
              parse_number(cells[0], path, number)};
    if (!(p.bpp > 0.0)) {
      fail(ErrorCategory::kData, path.string() + ":" + std::to_string(number) + ": bpp must be positive");
    }
    curve.points.push_back(p);
  }
  if (!header) fail(ErrorCategory::kData, path.string() + ": empty RD curve file");
  curve.sort_by_rate();
  return curve;
}

void write_rd_csv(const std::filesystem::path& path, const RDCurve& curve) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::kIo, "cannot write '" + path.string() + "'");
  out << "lambda,bpp,psnr\n";
  for (const auto& p : curve.points) {
    out << format_double(p.lambda, 6) << ',' << format_double(p.bpp, 8) << ',' << format_double(p.psnr, 6) << '\n';
  }
}

void write_metrics_jsonl(const std::filesystem::path& path, const std::vector<FrameMetrics>& metrics,
                         bool include_time) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::kIo, "cannot write '" + path.string() + "'");
  for (const auto& m : metrics) out << m.to_json(include_time).dump() << '\n';
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<std::vector<FrameMetrics>>& per_video) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::kIo, "cannot write '" + path.string() + "'");
  out << "sequence,frames,intra_frames,bpp,psnr\n";
  for (const auto& frames : per_video) {
    if (frames.empty()) continue;
    const auto point = average_point({frames}, 0.0);
    const auto intra = std::count_if(frames.begin(), frames.end(),
                                     [](const FrameMetrics& f) { return f.type == FrameType::kIntra; });
    out << frames.front().sequence_id << ',' << frames.size() << ',' << intra << ',' << format_double(point.bpp, 8)
        << ',' << format_double(point.psnr, 6) << '\n';
  }
}

void BenchmarkReport::finalize() {
  if (bd_rates.empty()) fail(ErrorCategory::kBdRate, "benchmark report has no BD-rate entries");
  double sum = 0.0;
  for (const auto& [name, value] : bd_rates) sum += value;
  average_bd_rate = sum / static_cast<double>(bd_rates.size());
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json datasets = nlohmann::json::object();
  for (const auto& [name, value] : bd_rates) datasets[name] = value;
  nlohmann::json j = {{"bd_rate_percent", datasets}, {"average_bd_rate_percent", average_bd_rate}};
  j["parameter_count"] = parameter_count >= 0 ? nlohmann::json(parameter_count) : nlohmann::json(nullptr);
  j["mean_time_s"] = mean_time_s >= 0.0 ? nlohmann::json(mean_time_s) : nlohmann::json(nullptr);
  j["peak_memory_bytes"] = peak_memory_bytes >= 0 ? nlohmann::json(peak_memory_bytes) : nlohmann::json(nullptr);
  return j;
}

std::string BenchmarkReport::to_table() const {
  std::ostringstream out;
  size_t width = 7;
  for (const auto& [name, value] : bd_rates) width = std::max(width, name.size());
  auto row = [&](const std::string& name, const std::string& value) {
    out << name << std::string(width - name.size() + 2, ' ') << value << '\n';
  };
  row("Dataset", "BD-Rate (%)");
  for (const auto& [name, value] : bd_rates) row(name, format_double(value, 2));
  row("Average", format_double(average_bd_rate, 2));
  if (parameter_count >= 0) row("Params", format_double(static_cast<double>(parameter_count) / 1e6, 3) + " M");
  if (mean_time_s >= 0.0) row("Time", format_double(mean_time_s, 4) + " s");
  if (peak_memory_bytes >= 0) {
    row("Memory", format_double(static_cast<double>(peak_memory_bytes) / 1e9, 3) + " GB");
  }
  return out.str();
}

}  // namespace condvc
