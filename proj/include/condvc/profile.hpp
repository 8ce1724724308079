#pragma once

// Inference timing and peak-memory measurement of the P-frame path.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "condvc/codec.hpp"

namespace condvc {

struct ProfileReport {
  double mean_time_s = 0.0;
  int64_t peak_memory_bytes = 0;  // resident set high-water mark during the timed runs
  int64_t parameter_count = 0;
  std::vector<double> timings;  // one per timed run

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Times forward_pframe in eval mode on `sample` ([3, H, W]) referencing its
// own intra reconstruction. The first n_warmup runs are discarded.
ProfileReport profile_model(ConditionalCodec& model, const torch::Tensor& sample, int n_warmup, int n_runs);

// Resident-set high-water mark of this process in bytes; -1 if unavailable.
int64_t peak_resident_bytes();

// Restarts the high-water mark at the current resident size when the
// kernel allows it; returns false otherwise.
bool reset_peak_resident();

}  // namespace condvc
