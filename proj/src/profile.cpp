#include "condvc/profile.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <new>
#include <sstream>

#include <torch/torch.h>

#include "condvc/errors.hpp"

namespace condvc {

int64_t peak_resident_bytes() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      int64_t kib = 0;
      fields >> kib;
      return kib * 1024;
    }
  }
  return -1;
}

bool reset_peak_resident() {
  std::ofstream clear("/proc/self/clear_refs");
  if (!clear) return false;
  clear << "5";
  return static_cast<bool>(clear.flush());
}

ProfileReport profile_model(ConditionalCodec& model, const torch::Tensor& sample, int n_warmup, int n_runs) {
  if (sample.dim() != 3 || sample.size(0) != 3) {
    fail(ErrorCategory::kShape, "profile sample must be [3, H, W], got " + c10::str(sample.sizes()));
  }
  if (n_warmup < 0 || n_runs < 1) fail(ErrorCategory::kUsage, "profile needs n_warmup >= 0 and n_runs >= 1");
  ProfileReport report;
  report.parameter_count = count_parameters(*model);
  const auto x = sample.unsqueeze(0);
  try {
    torch::NoGradGuard no_grad;
    const auto ref = model->code_intra(x, CodingMode::kEval).next_reference();
    for (int i = 0; i < n_warmup; ++i) model->forward_pframe(x, ref, CodingMode::kEval, StageId::kAll);
    reset_peak_resident();
    for (int i = 0; i < n_runs; ++i) {
      const auto start = std::chrono::steady_clock::now();
      auto result = model->forward_pframe(x, ref, CodingMode::kEval, StageId::kAll);
      report.timings.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  } catch (const std::bad_alloc&) {
    fail(ErrorCategory::kResource, "out of memory at " + std::to_string(sample.size(2)) + "x" +
                                       std::to_string(sample.size(1)) + "; try a smaller resolution");
  } catch (const c10::Error& e) {
    const std::string what = e.what_without_backtrace();
    if (what.find("alloc") != std::string::npos || what.find("memory") != std::string::npos) {
      fail(ErrorCategory::kResource, "out of memory at " + std::to_string(sample.size(2)) + "x" +
                                         std::to_string(sample.size(1)) + "; try a smaller resolution");
    }
    throw;
  }
  double sum = 0.0;
  for (double t : report.timings) sum += t;
  report.mean_time_s = sum / static_cast<double>(report.timings.size());
  report.peak_memory_bytes = peak_resident_bytes();
  return report;
}

nlohmann::json ProfileReport::to_json() const {
  return {{"parameter_count", parameter_count},
          {"mean_time_s", mean_time_s},
          {"peak_memory_bytes", peak_memory_bytes},
          {"n_runs", timings.size()},
          {"timings_s", timings}};
}

std::string ProfileReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "parameters  %.3f M\ntime        %.4f s/frame (mean of %zu runs)\npeak memory %.3f GB\n",
                static_cast<double>(parameter_count) / 1e6, mean_time_s, timings.size(),
                static_cast<double>(peak_memory_bytes) / 1e9);
  return buf;
}

}  // namespace condvc
