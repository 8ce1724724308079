#include "condvc/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>

#include <torch/torch.h>

#include "condvc/bdrate.hpp"
#include "condvc/checkpoint.hpp"
#include "condvc/data.hpp"
#include "condvc/errors.hpp"
#include "condvc/eval.hpp"
#include "condvc/plot.hpp"
#include "condvc/profile.hpp"
#include "condvc/run_config.hpp"
#include "condvc/synthetic.hpp"
#include "condvc/training.hpp"

namespace condvc {

namespace fs = std::filesystem;

std::pair<int64_t, int64_t> parse_resolution(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    if (x != std::string::npos) {
      size_t used_w = 0, used_h = 0;
      const auto w = std::stoll(text.substr(0, x), &used_w);
      const auto h = std::stoll(text.substr(x + 1), &used_h);
      if (used_w == x && used_h == text.size() - x - 1 && w > 0 && h > 0) return {w, h};
    }
  } catch (const std::exception&) {
  }
  fail(ErrorCategory::kUsage, "resolution must look like WIDTHxHEIGHT, got '" + text + "'");
}

torch::Device select_device() {
  const char* env = std::getenv("CONDVC_DEVICE");
  const std::string name = env != nullptr && *env != '\0' ? env : "cpu";
  if (name != "cpu") {
    fail(ErrorCategory::kConfig, "CONDVC_DEVICE='" + name + "' is not supported; this build runs on 'cpu' only");
  }
  return torch::kCPU;
}

namespace {

RunConfig resolve_config(const CommonArgs& common) {
  auto overrides = common.overrides;
  if (common.seed) overrides.push_back("io.seed=" + std::to_string(*common.seed));
  return load_run_config(common.config, overrides);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::kIo, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

struct Datasets {
  std::unique_ptr<ClipProvider> train;
  std::unique_ptr<ClipProvider> val;
};

Datasets open_datasets(const RunConfig& config) {
  if (config.train_index.empty()) fail(ErrorCategory::kConfig, "train.index must name a dataset index file");
  auto records = read_clip_index(config.train_index);
  std::vector<ClipRecord> val;
  if (!config.val_index.empty()) {
    val = read_clip_index(config.val_index);
  } else {
    if (static_cast<int64_t>(records.size()) <= config.val_clips) {
      fail(ErrorCategory::kData, "dataset has " + std::to_string(records.size()) + " clips; holding out " +
                                     std::to_string(config.val_clips) + " leaves none for training");
    }
    val.assign(records.end() - config.val_clips, records.end());
    records.resize(records.size() - static_cast<size_t>(config.val_clips));
  }
  return {std::make_unique<FolderClipProvider>(std::move(records), config.train.crop, config.augment),
          std::make_unique<FolderClipProvider>(std::move(val), config.train.crop, AugmentConfig::none())};
}

TrainConfig trainer_config(const RunConfig& config) {
  auto t = config.train;
  t.checkpoint_dir = config.io.checkpoint_dir;
  t.metrics_path = config.io.metrics_dir / "train.jsonl";
  t.run_snapshot = config.to_json();
  return t;
}

void print_reports(const std::vector<StageReport>& reports, std::ostream& out) {
  for (const auto& r : reports) {
    out << "stage " << to_string(r.stage) << ": " << r.epochs.size() << " epochs, " << r.steps
        << " steps, val loss " << r.initial_val_loss << " -> " << r.final_val_loss << '\n';
  }
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out) {
  select_device();
  auto config = resolve_config(args.common);
  if (args.max_steps < 0) fail(ErrorCategory::kUsage, "--max-steps must be >= 0");
  if (args.max_steps > 0) config.train.max_steps_per_stage = args.max_steps;
  if (args.deterministic) config.train.deterministic = true;
  config.validate();
  std::optional<StageId> only;
  if (args.stage) only = parse_stage(*args.stage);

  const auto latest = config.io.checkpoint_dir / "latest.ckpt";
  ConditionalCodec model{nullptr};
  std::vector<std::string> completed;
  if (args.resume && fs::exists(latest)) {
    auto loaded = load_checkpoint(latest);
    model = loaded.model;
    completed = loaded.meta.completed_stages;
    out << "resuming from " << latest.string() << " (completed:";
    for (const auto& s : completed) out << ' ' << s;
    out << ")\n";
  } else {
    torch::manual_seed(config.io.seed);
    model = ConditionalCodec(config.codec);
  }

  const auto schedule = build_stage_schedule(config.train);
  const bool want_finetune = args.finetune || (only && *only == StageId::kFinetune);
  bool pretrain_pending = false;
  for (const auto& spec : schedule) {
    if (spec.stage == StageId::kFinetune) continue;
    if (only && spec.stage != *only) continue;
    if (!contains(completed, std::string(to_string(spec.stage)))) pretrain_pending = true;
  }
  const bool finetune_pending = want_finetune && !contains(completed, "finetune");
  if (!pretrain_pending && !finetune_pending) {
    out << "nothing to do: requested stages already completed\n";
    return 0;
  }

  auto data = open_datasets(config);
  const TrainingData training{data.train.get(), data.val.get()};
  const auto tcfg = trainer_config(config);
  if (pretrain_pending) {
    print_reports(run_pretraining(model, training, schedule, tcfg, completed, only), out);
  }
  if (finetune_pending) {
    print_reports({run_finetune(model, training, schedule.back(), tcfg, completed)}, out);
  }
  out << "checkpoint: " << latest.string() << '\n';
  return 0;
}

int cmd_finetune(const FinetuneArgs& args, std::ostream& out) {
  select_device();
  auto config = resolve_config(args.common);
  if (args.max_steps > 0) config.train.max_steps_per_stage = args.max_steps;
  if (args.deterministic) config.train.deterministic = true;
  config.validate();
  const auto path = args.checkpoint.empty() ? config.io.checkpoint_dir / "latest.ckpt" : args.checkpoint;
  auto loaded = load_checkpoint(path);
  if (contains(loaded.meta.completed_stages, "finetune")) {
    out << "nothing to do: " << path.string() << " is already finetuned\n";
    return 0;
  }
  // The architecture always comes from the checkpoint.
  config.codec = loaded.meta.codec;
  config.train.lambda = config.codec.lambda;
  auto data = open_datasets(config);
  const TrainingData training{data.train.get(), data.val.get()};
  auto completed = loaded.meta.completed_stages;
  const auto schedule = build_stage_schedule(config.train);
  print_reports({run_finetune(loaded.model, training, schedule.back(), trainer_config(config), completed)}, out);
  out << "checkpoint: " << (config.io.checkpoint_dir / "latest.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  select_device();
  if (args.inputs.empty()) fail(ErrorCategory::kUsage, "eval needs at least one input sequence");
  if (args.frames < 1) fail(ErrorCategory::kUsage, "--frames must be >= 1");
  if (args.intra_period < 1) fail(ErrorCategory::kUsage, "--intra-period must be >= 1");
  if (args.common.seed) torch::manual_seed(*args.common.seed);
  auto loaded = load_checkpoint(args.checkpoint);

  EncodeOptions options;
  options.intra_period = args.intra_period;
  options.n_frames = args.frames;
  std::vector<std::vector<FrameMetrics>> per_video;
  std::vector<FrameMetrics> all;
  for (const auto& input : args.inputs) {
    SequenceRequest request;
    request.n_frames = args.frames;
    request.matrix = parse_color_matrix(args.matrix);
    if (fs::is_directory(input)) {
      request.format = SequenceFormat::kPngDir;
    } else {
      request.format = SequenceFormat::kYuv420p8;
      if (args.resolution.empty()) {
        fail(ErrorCategory::kUsage, "raw YUV input '" + input.string() + "' needs --resolution WxH");
      }
      std::tie(request.width, request.height) = parse_resolution(args.resolution);
    }
    auto video = load_test_sequence(input, request);
    auto metrics = encode_sequence(loaded.model, video, options);
    all.insert(all.end(), metrics.begin(), metrics.end());
    const auto point = average_point({metrics}, loaded.meta.codec.lambda);
    out << video.source_id << ": " << metrics.size() << " frames, bpp " << std::fixed << std::setprecision(5)
        << point.bpp << ", psnr " << std::setprecision(3) << point.psnr << " dB\n";
    out.unsetf(std::ios::floatfield);
    per_video.push_back(std::move(metrics));
  }
  fs::create_directories(args.out_dir);
  write_metrics_jsonl(args.out_dir / "metrics.jsonl", all, args.timing);
  write_summary_csv(args.out_dir / "summary.csv", per_video);
  RDCurve point{"eval", {average_point(per_video, loaded.meta.codec.lambda)}};
  write_rd_csv(args.out_dir / "rd_point.csv", point);
  out << "wrote " << (args.out_dir / "metrics.jsonl").string() << '\n';
  return 0;
}

int cmd_bdrate(const BdrateArgs& args, std::ostream& out) {
  if (args.pairs.empty()) fail(ErrorCategory::kUsage, "bdrate needs at least one --pair NAME ANCHOR TEST");
  const auto variant = parse_bd_variant(args.variant);
  BenchmarkReport report;
  for (const auto& [name, anchor_path, test_path] : args.pairs) {
    const auto anchor = read_rd_csv(anchor_path);
    const auto test = read_rd_csv(test_path);
    report.bd_rates.emplace_back(name, bd_rate(anchor, test, variant));
  }
  report.finalize();
  out << report.to_table();
  if (!args.out_json.empty()) write_json(args.out_json, report.to_json());
  return 0;
}

int cmd_profile(const ProfileArgs& args, std::ostream& out) {
  select_device();
  const auto [w, h] = parse_resolution(args.resolution);
  ConditionalCodec model{nullptr};
  if (args.checkpoint.empty()) {
    const auto config = resolve_config(args.common);
    torch::manual_seed(config.io.seed);
    model = ConditionalCodec(config.codec);
  } else {
    model = load_checkpoint(args.checkpoint).model;
  }
  torch::manual_seed(args.common.seed.value_or(0));
  const auto sample = torch::rand({3, h, w});
  const auto report = profile_model(model, sample, args.warmup, args.runs);
  out << "resolution  " << w << "x" << h << '\n' << report.to_text();
  if (!args.out_json.empty()) write_json(args.out_json, report.to_json());
  return 0;
}

int cmd_plot(const PlotArgs& args, std::ostream& out) {
  if (args.curves.empty()) fail(ErrorCategory::kUsage, "plot needs at least one curve CSV");
  if (args.outputs.empty()) fail(ErrorCategory::kUsage, "plot needs --out");
  std::vector<RDCurve> curves;
  for (const auto& path : args.curves) curves.push_back(read_rd_csv(path));
  PlotOptions options;
  options.title = args.title;
  for (const auto& path : args.outputs) {
    plot_rd(curves, path, options);
    out << "wrote " << path.string() << '\n';
  }
  return 0;
}

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  if (args.clips < 1) fail(ErrorCategory::kUsage, "--clips must be >= 1");
  SyntheticSpec spec;
  spec.frames = args.frames;
  spec.height = args.size;
  spec.width = args.size;
  const auto index = write_synthetic_dataset(args.out_dir, args.clips, spec, args.seed);
  out << "wrote " << args.clips << " clips, index " << index.string() << '\n';
  return 0;
}

}  // namespace condvc
