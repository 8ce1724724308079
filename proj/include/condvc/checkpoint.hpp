#pragma once

// Versioned checkpoint container: model weights, the codec configuration,
// training-stage metadata and optimizer state in one torch archive.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "condvc/codec.hpp"

namespace condvc {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  int format_version = kCheckpointFormatVersion;
  CodecConfig codec;
  std::vector<std::string> completed_stages;
  std::string stage;  // last stage that ran, empty for an untrained model
  nlohmann::json scheduler = nlohmann::json::object();
  nlohmann::json run = nlohmann::json::object();  // effective run configuration

  nlohmann::json to_json() const;
  static CheckpointMeta from_json(const nlohmann::json& j);
};

// `optimizer` may be null.
void save_checkpoint(const std::filesystem::path& path, ConditionalCodec& model, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer = nullptr);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

struct LoadedCheckpoint {
  ConditionalCodec model{nullptr};
  CheckpointMeta meta;
};

// Rebuilds the model from the embedded configuration and loads its weights.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Returns false when the checkpoint carries no optimizer state.
bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace condvc
