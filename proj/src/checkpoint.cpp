#include "condvc/checkpoint.hpp"

#include <torch/torch.h>

#include "condvc/errors.hpp"
#include "condvc/run_config.hpp"

namespace condvc {

nlohmann::json CheckpointMeta::to_json() const {
  return {{"format_version", format_version},
          {"codec", codec_config_to_json(codec)},
          {"completed_stages", completed_stages},
          {"stage", stage},
          {"scheduler", scheduler},
          {"run", run}};
}

CheckpointMeta CheckpointMeta::from_json(const nlohmann::json& j) {
  CheckpointMeta meta;
  try {
    meta.format_version = j.at("format_version").get<int>();
    meta.codec = codec_config_from_json(j.at("codec"));
    meta.completed_stages = j.at("completed_stages").get<std::vector<std::string>>();
    meta.stage = j.at("stage").get<std::string>();
    meta.scheduler = j.at("scheduler");
    meta.run = j.at("run");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kIo, std::string("malformed checkpoint metadata: ") + e.what());
  }
  return meta;
}

void save_checkpoint(const std::filesystem::path& path, ConditionalCodec& model, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer) {
  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(meta.to_json().dump()));
  torch::serialize::OutputArchive weights;
  model->save(weights);
  archive.write("model", weights);
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive state;
    optimizer->save(state);
    archive.write("optimizer", state);
  }
  // Write-then-rename keeps an existing checkpoint intact on failure.
  auto tmp = path;
  tmp += ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    fail(ErrorCategory::kIo, "cannot write checkpoint '" + path.string() + "': " + e.what_without_backtrace());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    fail(ErrorCategory::kIo, "checkpoint '" + path.string() + "' does not exist");
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    fail(ErrorCategory::kIo, "'" + path.string() + "' is not a readable checkpoint: " + e.what_without_backtrace());
  }
  return archive;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  c10::IValue raw;
  if (!archive.try_read("meta", raw) || !raw.isString()) {
    fail(ErrorCategory::kIo, "checkpoint '" + path.string() + "' has no metadata");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.toStringRef());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kIo, std::string("malformed checkpoint metadata: ") + e.what());
  }
  auto meta = CheckpointMeta::from_json(j);
  if (meta.format_version != kCheckpointFormatVersion) {
    fail(ErrorCategory::kIo, "checkpoint format version " + std::to_string(meta.format_version) +
                                 " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }
  return meta;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  return read_meta(archive, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  LoadedCheckpoint loaded;
  loaded.meta = read_meta(archive, path);
  loaded.model = ConditionalCodec(loaded.meta.codec);
  torch::serialize::InputArchive weights;
  if (!archive.try_read("model", weights)) fail(ErrorCategory::kIo, "checkpoint has no model weights");
  try {
    loaded.model->load(weights);
  } catch (const c10::Error& e) {
    fail(ErrorCategory::kIo, "checkpoint weights do not match its configuration: " +
                                 std::string(e.what_without_backtrace()));
  }
  return loaded;
}

bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
  auto archive = open_archive(path);
  torch::serialize::InputArchive state;
  if (!archive.try_read("optimizer", state)) return false;
  optimizer.load(state);
  return true;
}

}  // namespace condvc
