#pragma once

// Progressive pretraining on IPP clips with per-stage module freezing,
// followed by multi-frame finetuning through the unrolled reference chain.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "condvc/codec.hpp"
#include "condvc/data.hpp"
#include "condvc/stage.hpp"

namespace condvc {

enum class LrPolicyKind { kPlateau, kFixed };

struct LrPolicy {
  LrPolicyKind kind = LrPolicyKind::kPlateau;
  double factor = 0.5;
  int patience = 3;
};

struct StageSpec {
  StageId stage = StageId::kMe;
  std::vector<ParamGroup> trainable;
  std::vector<ParamGroup> frozen;
  StageId loss_id = StageId::kMe;
  int epochs = 30;
  double initial_lr = 1e-4;
  LrPolicy lr_policy;
  int64_t clip_length = 3;
};

struct TrainConfig {
  double lambda = 2048.0;
  int64_t batch_size = 4;
  int64_t pretrain_clip_length = 3;  // I P P
  int64_t finetune_clip_length = 7;
  int64_t crop = 256;
  uint64_t seed = 0;
  int pretrain_epochs = 30;
  int finetune_epochs = 10;
  double pretrain_lr = 1e-4;
  double finetune_lr = 4e-5;
  double plateau_factor = 0.5;
  int plateau_patience = 3;
  double grad_clip_norm = 1.0;
  int64_t steps_per_epoch = 0;      // 0: one pass over the training clips
  int64_t max_steps_per_stage = 0;  // 0: unlimited
  CodingMode train_mode = CodingMode::kTrainSte;
  bool deterministic = false;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path metrics_path;    // empty: no metrics file
  nlohmann::json run_snapshot;           // embedded verbatim in checkpoints

  // Throws Error(kConfig) naming the offending key.
  void validate() const;
};

// Five stages in execution order: me, reconstruction, contextual_coding, all
// (plateau schedule) and finetune (fixed rate).
std::vector<StageSpec> build_stage_schedule(const TrainConfig& config);

// Parameter groups optimized in `stage`; the complement is frozen.
std::vector<ParamGroup> trainable_groups(StageId stage);

// Sets requires_grad per group and returns the trainable tensors.
std::vector<torch::Tensor> apply_freezing(StageId stage, ConditionalCodec& model);
void unfreeze_all(ConditionalCodec& model);

// Step-on-plateau learning-rate schedule on a minimized monitor. A value
// counts as an improvement when it is below best * (1 - 1e-4); the rate is
// multiplied by `factor` once the number of consecutive non-improving
// epochs exceeds `patience`.
class PlateauPolicy {
 public:
  PlateauPolicy(double initial_lr, LrPolicy policy);

  // Records one epoch's monitor value; returns the rate for the next epoch.
  double step(double monitor);
  double lr() const { return lr_; }
  int bad_epochs() const { return bad_epochs_; }

  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  double lr_;
  LrPolicy policy_;
  double best_;
  int bad_epochs_ = 0;
};

// Named terms of a stage loss, each averaged over P-frames and batch.
using LossTerms = std::vector<std::pair<std::string, torch::Tensor>>;

LossTerms stage_loss_terms(StageId stage, const std::vector<FrameResult>& pframes, double lambda);

// Sum of stage_loss_terms: per-frame stage objective averaged over P-frames.
torch::Tensor compute_stage_loss(StageId stage, const std::vector<FrameResult>& pframes, double lambda);

// lambda * D + bpp of the I-frame, averaged over the batch.
LossTerms intra_loss_terms(const IntraResult& intra, double lambda);

struct ClipForward {
  std::optional<IntraResult> intra;  // absent when the stage bypasses intra coding
  std::vector<FrameResult> pframes;
  LossTerms terms;  // everything summed into the objective
  torch::Tensor objective;
};

// Codes frame 0 as intra and frames 1..T-1 as cascaded P-frames of a
// [N, T, 3, H, W] batch, with the reference wiring of `stage`.
ClipForward forward_clip(ConditionalCodec& model, const torch::Tensor& clips, StageId stage,
                         CodingMode mode, double lambda,
                         std::optional<at::Generator> generator = std::nullopt);

struct EpochMetrics {
  StageId stage = StageId::kMe;
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double bpp = 0.0;   // mean P-frame bpp on held-out clips (motion only in stage me)
  double psnr = 0.0;  // mean P-frame PSNR on held-out clips (warped frame in stage me)
  int64_t steps = 0;

  nlohmann::json to_json() const;
};

struct StageReport {
  StageId stage = StageId::kMe;
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  int64_t steps = 0;
  std::vector<EpochMetrics> epochs;
};

struct ValidationResult {
  double loss = 0.0;
  double bpp = 0.0;
  double psnr = 0.0;
};

struct TrainingData {
  const ClipProvider* train = nullptr;
  const ClipProvider* val = nullptr;
};

class Trainer {
 public:
  Trainer(ConditionalCodec model, TrainConfig config);

  StageReport run_stage(const StageSpec& spec, const TrainingData& data);
  ValidationResult validate(const StageSpec& spec, const ClipProvider& val);

  // Called after every optimizer step with (stage, step index, objective).
  std::function<void(StageId, int64_t, double)> on_step;

  // Stages already finished before this trainer runs; recorded in checkpoints.
  void set_completed(std::vector<std::string> completed) { completed_before_ = std::move(completed); }

  ConditionalCodec& model() { return model_; }
  const TrainConfig& config() const { return config_; }

 private:
  ConditionalCodec model_;
  TrainConfig config_;
  std::vector<std::string> completed_before_;
};

// Runs the pretraining stages of `schedule` in order. Stages listed in
// `completed` are skipped; when `only` is set every other stage is skipped.
// After each stage the model is checkpointed (when a directory is set) and
// the stage name appended to `completed`.
std::vector<StageReport> run_pretraining(ConditionalCodec& model, const TrainingData& data,
                                         const std::vector<StageSpec>& schedule, const TrainConfig& config,
                                         std::vector<std::string>& completed,
                                         std::optional<StageId> only = std::nullopt);

StageReport run_finetune(ConditionalCodec& model, const TrainingData& data, const StageSpec& spec,
                         const TrainConfig& config, std::vector<std::string>& completed);

}  // namespace condvc
