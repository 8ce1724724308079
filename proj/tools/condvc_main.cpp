#include <iostream>

#include <CLI11.hpp>

#include "condvc/commands.hpp"
#include "condvc/errors.hpp"

namespace {

void add_common(CLI::App* cmd, condvc::CommonArgs& common) {
  cmd->add_option("-c,--config", common.config, "JSON run configuration");
  cmd->add_option("--set", common.overrides, "Override a config value, e.g. --set train.batch_size=8")
      ->take_all();
  cmd->add_option("--seed", common.seed, "Random seed (overrides io.seed)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional learned video codec: training, evaluation and benchmarking"};
  app.require_subcommand(1);

  condvc::TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Progressive pretraining (optionally followed by finetuning)");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--stage", train.stage, "Run only this stage: me, reconstruction, contextual_coding, all, finetune");
  train_cmd->add_option("--max-steps", train.max_steps, "Optimizer steps per stage (0: schedule default)");
  train_cmd->add_flag("--resume", train.resume, "Skip stages recorded in <checkpoint_dir>/latest.ckpt");
  train_cmd->add_flag("--finetune", train.finetune, "Run multi-frame finetuning after pretraining");
  train_cmd->add_flag("--deterministic", train.deterministic, "Use deterministic kernels only");

  condvc::FinetuneArgs finetune;
  auto* finetune_cmd = app.add_subcommand("finetune", "Multi-frame finetuning of a pretrained checkpoint");
  add_common(finetune_cmd, finetune.common);
  finetune_cmd->add_option("--checkpoint", finetune.checkpoint, "Pretrained checkpoint (default: latest)");
  finetune_cmd->add_option("--max-steps", finetune.max_steps, "Optimizer steps (0: schedule default)");
  finetune_cmd->add_flag("--deterministic", finetune.deterministic, "Use deterministic kernels only");

  condvc::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Low-delay coding of test sequences with per-frame metrics");
  eval_cmd->add_option("--seed", eval.common.seed, "Random seed");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("inputs", eval.inputs, "Raw YUV 4:2:0 files or PNG frame folders")->required();
  eval_cmd->add_option("-o,--out", eval.out_dir, "Output directory")->capture_default_str();
  eval_cmd->add_option("--frames", eval.frames, "Frames per sequence")->capture_default_str();
  eval_cmd->add_option("--intra-period", eval.intra_period, "Distance between intra frames")->capture_default_str();
  eval_cmd->add_option("--resolution", eval.resolution, "WxH of raw YUV inputs");
  eval_cmd->add_option("--matrix", eval.matrix, "YUV matrix: bt601 or bt709")->capture_default_str();
  eval_cmd->add_flag("--timing", eval.timing, "Record per-frame wall-clock time in the metrics file");

  condvc::BdrateArgs bdrate;
  std::vector<std::string> pair_values;
  auto* bd_cmd = app.add_subcommand("bdrate", "BD-rate of test RD curves against anchors");
  bd_cmd->add_option("--pair", pair_values, "NAME ANCHOR_CSV TEST_CSV (repeatable)")->expected(3)->required()->take_all();
  bd_cmd->add_option("--out", bdrate.out_json, "Write the report as JSON");
  bd_cmd->add_option("--variant", bdrate.variant, "cubic or pchip")->capture_default_str();

  condvc::ProfileArgs profile;
  auto* profile_cmd = app.add_subcommand("profile", "Time and memory of one P-frame forward pass");
  add_common(profile_cmd, profile.common);
  profile_cmd->add_option("--checkpoint", profile.checkpoint, "Model checkpoint (default: fresh model)");
  profile_cmd->add_option("--resolution", profile.resolution, "WxH")->capture_default_str();
  profile_cmd->add_option("--warmup", profile.warmup, "Discarded runs")->capture_default_str();
  profile_cmd->add_option("--runs", profile.runs, "Timed runs")->capture_default_str();
  profile_cmd->add_option("--out", profile.out_json, "Write the report as JSON");

  condvc::PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Plot RD curves to SVG and/or PNG");
  plot_cmd->add_option("curves", plot.curves, "RD curve CSV files (lambda,bpp,psnr)")->required();
  plot_cmd->add_option("-o,--out", plot.outputs, "Output .svg or .png (repeatable)")->required();
  plot_cmd->add_option("--title", plot.title, "Plot title");

  condvc::SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic moving-texture training set");
  synth_cmd->add_option("out", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--clips", synth.clips, "Number of clips")->capture_default_str();
  synth_cmd->add_option("--frames", synth.frames, "Frames per clip")->capture_default_str();
  synth_cmd->add_option("--size", synth.size, "Frame width and height")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << "error[usage]: " << e.what() << '\n';
    return code == 0 ? 0 : condvc::exit_code(condvc::ErrorCategory::kUsage);
  }

  try {
    if (*train_cmd) return condvc::cmd_train(train, std::cout);
    if (*finetune_cmd) return condvc::cmd_finetune(finetune, std::cout);
    if (*eval_cmd) return condvc::cmd_eval(eval, std::cout);
    if (*bd_cmd) {
      for (size_t i = 0; i + 2 < pair_values.size(); i += 3) {
        bdrate.pairs.emplace_back(pair_values[i], pair_values[i + 1], pair_values[i + 2]);
      }
      return condvc::cmd_bdrate(bdrate, std::cout);
    }
    if (*profile_cmd) return condvc::cmd_profile(profile, std::cout);
    if (*plot_cmd) return condvc::cmd_plot(plot, std::cout);
    if (*synth_cmd) return condvc::cmd_synth(synth, std::cout);
  } catch (const condvc::Error& e) {
    std::cerr << "error[" << condvc::category_name(e.category()) << "]: " << e.what() << '\n';
    return condvc::exit_code(e.category());
  } catch (const std::bad_alloc&) {
    std::cerr << "error[resource]: out of memory\n";
    return condvc::exit_code(condvc::ErrorCategory::kResource);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
