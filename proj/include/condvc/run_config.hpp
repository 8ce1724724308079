#pragma once

// The merged run configuration (defaults < config file < --set overrides)
// and its JSON schema. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "condvc/codec.hpp"
#include "condvc/data.hpp"
#include "condvc/training.hpp"

namespace condvc {

nlohmann::json codec_config_to_json(const CodecConfig& config);
CodecConfig codec_config_from_json(const nlohmann::json& j);

struct EvalSettings {
  int64_t intra_period = 32;
  int64_t n_frames = 96;
  std::vector<std::string> datasets;
  SequenceFormat format = SequenceFormat::kPngDir;
  int64_t width = 0;
  int64_t height = 0;
  ColorMatrix matrix = ColorMatrix::kBt601;
};

struct IoSettings {
  std::filesystem::path checkpoint_dir = "runs/checkpoints";
  std::filesystem::path metrics_dir = "runs/metrics";
  uint64_t seed = 0;
};

struct RunConfig {
  CodecConfig codec;
  TrainConfig train;  // train.lambda mirrors codec.lambda
  AugmentConfig augment;
  std::filesystem::path train_index;  // dataset index file
  std::filesystem::path val_index;    // empty: hold out the last clips of the training set
  int64_t val_clips = 4;
  EvalSettings eval;
  IoSettings io;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// Applies "a.b.c=value" to a JSON tree. The value is parsed as JSON when
// possible and taken as a string otherwise. The path must already exist.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// Defaults, then `config_path` (if non-empty), then each override.
RunConfig load_run_config(const std::filesystem::path& config_path, const std::vector<std::string>& overrides);

}  // namespace condvc
