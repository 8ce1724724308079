#pragma once

// Command implementations behind the condvc executable. Each returns the
// process exit status and throws condvc::Error on failure.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <torch/types.h>

namespace condvc {

struct CommonArgs {
  std::filesystem::path config;         // empty: defaults only
  std::vector<std::string> overrides;   // dotted key=value
  std::optional<uint64_t> seed;
};

struct TrainArgs {
  CommonArgs common;
  std::optional<std::string> stage;  // run a single stage
  int64_t max_steps = 0;             // per stage; 0 keeps the configured value
  bool resume = false;
  bool finetune = false;             // continue with finetuning after pretraining
  bool deterministic = false;
};

struct FinetuneArgs {
  CommonArgs common;
  std::filesystem::path checkpoint;  // empty: <checkpoint_dir>/latest.ckpt
  int64_t max_steps = 0;
  bool deterministic = false;
};

struct EvalArgs {
  CommonArgs common;
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> inputs;  // YUV files or PNG folders
  std::filesystem::path out_dir = "eval_out";
  int64_t frames = 96;
  int64_t intra_period = 32;
  std::string resolution;  // WxH, required for raw YUV
  std::string matrix = "bt601";
  bool timing = false;  // include wall-clock times in the metrics file
};

struct BdrateArgs {
  std::vector<std::tuple<std::string, std::filesystem::path, std::filesystem::path>> pairs;  // name, anchor, test
  std::filesystem::path out_json;
  std::string variant = "cubic";
};

struct ProfileArgs {
  CommonArgs common;
  std::filesystem::path checkpoint;  // empty: a freshly initialised model from the config
  std::string resolution = "1920x1080";
  int warmup = 2;
  int runs = 10;
  std::filesystem::path out_json;
};

struct PlotArgs {
  std::vector<std::filesystem::path> curves;
  std::vector<std::filesystem::path> outputs;
  std::string title = "Rate-distortion";
};

struct SynthArgs {
  std::filesystem::path out_dir;
  int64_t clips = 64;
  int64_t frames = 7;
  int64_t size = 64;
  uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args, std::ostream& out);
int cmd_finetune(const FinetuneArgs& args, std::ostream& out);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_bdrate(const BdrateArgs& args, std::ostream& out);
int cmd_profile(const ProfileArgs& args, std::ostream& out);
int cmd_plot(const PlotArgs& args, std::ostream& out);
int cmd_synth(const SynthArgs& args, std::ostream& out);

// "WxH" -> (width, height). Throws Error(kUsage).
std::pair<int64_t, int64_t> parse_resolution(const std::string& text);

// Device named by CONDVC_DEVICE (default "cpu"). Throws when unavailable.
torch::Device select_device();

}  // namespace condvc
