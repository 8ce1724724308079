#include "condvc/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "condvc/checkpoint.hpp"
#include "condvc/errors.hpp"
#include "condvc/eval.hpp"

namespace condvc {

namespace {

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t mix(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0;
  for (auto p : parts) h = mix(h ^ p);
  return h;
}

bool contains(const std::vector<ParamGroup>& groups, ParamGroup g) {
  return std::find(groups.begin(), groups.end(), g) != groups.end();
}

torch::Tensor frame_mean(const std::vector<FrameResult>& pframes,
                         const std::function<torch::Tensor(const FrameResult&)>& per_sample) {
  std::vector<torch::Tensor> means;
  means.reserve(pframes.size());
  for (const auto& f : pframes) means.push_back(per_sample(f).mean());
  return torch::stack(means).mean();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    fail(ErrorCategory::kConfig, "codec.lambda must be a positive finite number");
  }
  if (batch_size < 1) fail(ErrorCategory::kConfig, "train.batch_size must be >= 1");
  if (pretrain_clip_length != 3) {
    fail(ErrorCategory::kConfig, "train.pretrain_clip_length must be 3 (I, P, P)");
  }
  if (finetune_clip_length < 4) fail(ErrorCategory::kConfig, "train.finetune_clip_length must be >= 4");
  if (crop < 1) fail(ErrorCategory::kConfig, "train.crop must be >= 1");
  if (pretrain_epochs < 0) fail(ErrorCategory::kConfig, "train.pretrain_epochs must be >= 0");
  if (finetune_epochs < 0) fail(ErrorCategory::kConfig, "train.finetune_epochs must be >= 0");
  if (!(pretrain_lr > 0.0)) fail(ErrorCategory::kConfig, "train.pretrain_lr must be positive");
  if (!(finetune_lr > 0.0)) fail(ErrorCategory::kConfig, "train.finetune_lr must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    fail(ErrorCategory::kConfig, "train.plateau_factor must lie in (0, 1)");
  }
  if (plateau_patience < 0) fail(ErrorCategory::kConfig, "train.plateau_patience must be >= 0");
  if (!(grad_clip_norm > 0.0)) fail(ErrorCategory::kConfig, "train.grad_clip_norm must be positive");
  if (steps_per_epoch < 0) fail(ErrorCategory::kConfig, "train.steps_per_epoch must be >= 0");
  if (max_steps_per_stage < 0) fail(ErrorCategory::kConfig, "train.max_steps_per_stage must be >= 0");
  if (train_mode == CodingMode::kEval) fail(ErrorCategory::kConfig, "train.mode must be a training mode");
}

std::vector<ParamGroup> trainable_groups(StageId stage) {
  switch (stage) {
    case StageId::kMe:
      return {ParamGroup::kMotionEstimation, ParamGroup::kMotionCodec};
    case StageId::kReconstruction:
    case StageId::kContextualCoding:
      return {ParamGroup::kContext, ParamGroup::kContextualCodec, ParamGroup::kIntra};
    case StageId::kAll:
    case StageId::kFinetune:
      return {kAllParamGroups.begin(), kAllParamGroups.end()};
  }
  fail(ErrorCategory::kConfig, "unknown stage");
}

std::vector<StageSpec> build_stage_schedule(const TrainConfig& config) {
  config.validate();
  std::vector<StageSpec> schedule;
  for (StageId stage : kAllStages) {
    StageSpec spec;
    spec.stage = stage;
    spec.loss_id = stage;
    spec.trainable = trainable_groups(stage);
    for (ParamGroup g : kAllParamGroups) {
      if (!contains(spec.trainable, g)) spec.frozen.push_back(g);
    }
    if (stage == StageId::kFinetune) {
      spec.epochs = config.finetune_epochs;
      spec.initial_lr = config.finetune_lr;
      spec.lr_policy = {LrPolicyKind::kFixed, 1.0, 0};
      spec.clip_length = config.finetune_clip_length;
    } else {
      spec.epochs = config.pretrain_epochs;
      spec.initial_lr = config.pretrain_lr;
      spec.lr_policy = {LrPolicyKind::kPlateau, config.plateau_factor, config.plateau_patience};
      spec.clip_length = config.pretrain_clip_length;
    }
    schedule.push_back(std::move(spec));
  }
  return schedule;
}

std::vector<torch::Tensor> apply_freezing(StageId stage, ConditionalCodec& model) {
  const auto trainable = trainable_groups(stage);
  std::vector<torch::Tensor> params;
  for (ParamGroup g : kAllParamGroups) {
    const bool on = contains(trainable, g);
    for (auto& p : model->group_parameters(g)) {
      p.set_requires_grad(on);
      if (on) params.push_back(p);
    }
  }
  return params;
}

void unfreeze_all(ConditionalCodec& model) {
  for (auto& p : model->parameters()) p.set_requires_grad(true);
}

PlateauPolicy::PlateauPolicy(double initial_lr, LrPolicy policy)
    : lr_(initial_lr), policy_(policy), best_(std::numeric_limits<double>::infinity()) {}

double PlateauPolicy::step(double monitor) {
  if (policy_.kind == LrPolicyKind::kFixed) return lr_;
  if (monitor < best_ * (1.0 - 1e-4) || (std::isinf(best_) && std::isfinite(monitor))) {
    best_ = monitor;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  if (bad_epochs_ > policy_.patience) {
    lr_ *= policy_.factor;
    bad_epochs_ = 0;
  }
  return lr_;
}

nlohmann::json PlateauPolicy::state() const {
  return {{"lr", lr_},
          {"best", std::isinf(best_) ? nlohmann::json(nullptr) : nlohmann::json(best_)},
          {"bad_epochs", bad_epochs_},
          {"kind", policy_.kind == LrPolicyKind::kFixed ? "fixed" : "plateau"},
          {"factor", policy_.factor},
          {"patience", policy_.patience}};
}

void PlateauPolicy::restore(const nlohmann::json& state) {
  lr_ = state.at("lr").get<double>();
  best_ = state.at("best").is_null() ? std::numeric_limits<double>::infinity() : state.at("best").get<double>();
  bad_epochs_ = state.at("bad_epochs").get<int>();
}

LossTerms stage_loss_terms(StageId stage, const std::vector<FrameResult>& pframes, double lambda) {
  if (pframes.empty()) fail(ErrorCategory::kData, "stage loss needs at least one P-frame result");
  auto bpp = [&](auto member) { return frame_mean(pframes, [&](const FrameResult& f) { return (f.rates.*member)(); }); };
  auto d_warped = [&] {
    return lambda * frame_mean(pframes, [](const FrameResult& f) { return f.distortion_warped; });
  };
  auto d_recon = [&] {
    return lambda * frame_mean(pframes, [](const FrameResult& f) { return f.distortion_recon; });
  };
  switch (stage) {
    case StageId::kMe:
      return {{"distortion_warped", d_warped()},
              {"bpp_motion", bpp(&RateBreakdown::bpp_motion)},
              {"bpp_motion_hyper", bpp(&RateBreakdown::bpp_motion_hyper)}};
    case StageId::kReconstruction:
      return {{"distortion_recon", d_recon()}};
    case StageId::kContextualCoding:
      return {{"distortion_recon", d_recon()},
              {"bpp_content", bpp(&RateBreakdown::bpp_content)},
              {"bpp_content_hyper", bpp(&RateBreakdown::bpp_content_hyper)}};
    case StageId::kAll:
    case StageId::kFinetune:
      return {{"distortion_recon", d_recon()},
              {"bpp_motion", bpp(&RateBreakdown::bpp_motion)},
              {"bpp_motion_hyper", bpp(&RateBreakdown::bpp_motion_hyper)},
              {"bpp_content", bpp(&RateBreakdown::bpp_content)},
              {"bpp_content_hyper", bpp(&RateBreakdown::bpp_content_hyper)}};
  }
  fail(ErrorCategory::kConfig, "unknown stage id " + std::to_string(static_cast<int>(stage)));
}

torch::Tensor compute_stage_loss(StageId stage, const std::vector<FrameResult>& pframes, double lambda) {
  auto terms = stage_loss_terms(stage, pframes, lambda);
  auto total = terms.front().second;
  for (size_t i = 1; i < terms.size(); ++i) total = total + terms[i].second;
  return total;
}

LossTerms intra_loss_terms(const IntraResult& intra, double lambda) {
  return {{"intra_distortion", lambda * intra.distortion.mean()},
          {"intra_bpp", intra.rates.bpp_total().mean()}};
}

ClipForward forward_clip(ConditionalCodec& model, const torch::Tensor& clips, StageId stage,
                         CodingMode mode, double lambda, std::optional<at::Generator> generator) {
  if (clips.dim() != 5 || clips.size(2) != 3 || clips.size(1) < 2) {
    fail(ErrorCategory::kShape, "forward_clip expects [N, T>=2, 3, H, W], got " + c10::str(clips.sizes()));
  }
  ClipForward out;
  const auto x0 = clips.select(1, 0);
  ReferenceState ref;
  // Motion warm-up runs before the intra codec has been trained, so it
  // predicts from source frames and leaves the intra codec untouched.
  const bool motion_warmup = stage == StageId::kMe;
  if (motion_warmup) {
    ref = {x0, {}};
  } else {
    out.intra = model->code_intra(x0, mode, generator);
    ref = out.intra->next_reference();
    // The intra codec trains on its own objective until the contextual stage.
    if (stage == StageId::kReconstruction) ref.recon_frame = ref.recon_frame.detach();
  }
  for (int64_t t = 1; t < clips.size(1); ++t) {
    const auto x = clips.select(1, t);
    auto result = model->forward_pframe(x, ref, mode, stage, generator);
    ref = motion_warmup ? ReferenceState{x, {}} : result.next_reference();
    out.pframes.push_back(std::move(result));
  }
  out.terms = stage_loss_terms(stage, out.pframes, lambda);
  if (out.intra) {
    for (auto& term : intra_loss_terms(*out.intra, lambda)) out.terms.push_back(std::move(term));
  }
  out.objective = out.terms.front().second;
  for (size_t i = 1; i < out.terms.size(); ++i) out.objective = out.objective + out.terms[i].second;
  return out;
}

nlohmann::json EpochMetrics::to_json() const {
  return {{"stage", std::string(to_string(stage))},
          {"epoch", epoch},
          {"lr", lr},
          {"train_loss", train_loss},
          {"val_loss", val_loss},
          {"bpp", bpp},
          {"psnr", psnr},
          {"steps", steps}};
}

Trainer::Trainer(ConditionalCodec model, TrainConfig config) : model_(std::move(model)), config_(std::move(config)) {
  config_.validate();
  if (config_.deterministic) at::globalContext().setDeterministicAlgorithms(true, false);
}

namespace {

void check_finite(const LossTerms& terms, StageId stage, int epoch, int64_t step) {
  for (const auto& [name, value] : terms) {
    const double v = value.item<double>();
    if (!std::isfinite(v)) {
      fail(ErrorCategory::kNumeric, "non-finite loss term '" + name + "' (" + std::to_string(v) +
                                        ") in stage " + std::string(to_string(stage)) + ", epoch " +
                                        std::to_string(epoch) + ", step " + std::to_string(step));
    }
  }
}

torch::Tensor gather_batch(const ClipProvider& provider, const std::vector<size_t>& indices, int64_t length,
                           const std::vector<uint64_t>& seeds, bool augment) {
  std::vector<torch::Tensor> clips;
  for (size_t i = 0; i < indices.size(); ++i) clips.push_back(provider.clip(indices[i], length, seeds[i], augment));
  return torch::stack(clips);
}

void append_metrics(const std::filesystem::path& path, const EpochMetrics& m) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCategory::kIo, "cannot append to metrics file '" + path.string() + "'");
  out << m.to_json().dump() << '\n';
}

}  // namespace

ValidationResult Trainer::validate(const StageSpec& spec, const ClipProvider& val) {
  torch::NoGradGuard no_grad;
  const auto n = val.size();
  if (n == 0) fail(ErrorCategory::kData, "validation set is empty");
  double loss = 0.0, bpp = 0.0, psnr_sum = 0.0;
  int64_t frames = 0;
  for (size_t first = 0; first < n; first += config_.batch_size) {
    std::vector<size_t> idx;
    for (size_t i = first; i < std::min<size_t>(n, first + config_.batch_size); ++i) idx.push_back(i);
    auto batch = gather_batch(val, idx, spec.clip_length, std::vector<uint64_t>(idx.size(), 0), false);
    auto fwd = forward_clip(model_, batch, spec.stage, CodingMode::kEval, config_.lambda);
    loss += fwd.objective.item<double>() * static_cast<double>(idx.size());
    for (size_t t = 0; t < fwd.pframes.size(); ++t) {
      const auto& f = fwd.pframes[t];
      const auto source = batch.select(1, static_cast<int64_t>(t) + 1);
      // The motion warm-up is judged on the motion path alone.
      const bool warmup = spec.stage == StageId::kMe;
      auto bpp_per = warmup ? f.rates.bpp_motion() + f.rates.bpp_motion_hyper() : f.rates.bpp_total();
      auto mse_per = mse_per_sample(warmup ? f.warped : f.recon, source);
      for (int64_t b = 0; b < batch.size(0); ++b) {
        bpp += bpp_per[b].item<double>();
        psnr_sum += psnr_from_mse(mse_per[b].item<double>());
        ++frames;
      }
    }
  }
  return {loss / static_cast<double>(n), bpp / static_cast<double>(frames), psnr_sum / static_cast<double>(frames)};
}

StageReport Trainer::run_stage(const StageSpec& spec, const TrainingData& data) {
  if (data.train == nullptr || data.val == nullptr) fail(ErrorCategory::kUsage, "training data not set");
  const auto n = data.train->size();
  if (n == 0) fail(ErrorCategory::kData, "training set is empty");

  auto params = apply_freezing(spec.stage, model_);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(spec.initial_lr));
  PlateauPolicy policy(spec.initial_lr, spec.lr_policy);

  StageReport report;
  report.stage = spec.stage;
  report.initial_val_loss = validate(spec, *data.val).loss;
  report.final_val_loss = report.initial_val_loss;

  const int64_t steps_per_epoch =
      config_.steps_per_epoch > 0 ? config_.steps_per_epoch
                                  : (static_cast<int64_t>(n) + config_.batch_size - 1) / config_.batch_size;
  const int64_t limit = config_.max_steps_per_stage > 0 ? config_.max_steps_per_stage
                                                        : std::numeric_limits<int64_t>::max();
  const auto stage_key = static_cast<uint64_t>(stage_index(spec.stage));

  for (int epoch = 0; epoch < spec.epochs && report.steps < limit; ++epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix({config_.seed, stage_key, static_cast<uint64_t>(epoch), 0x5eedULL}));
    std::shuffle(order.begin(), order.end(), rng);

    const double lr = policy.lr();
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
    double loss_sum = 0.0;
    int64_t epoch_steps = 0;
    for (int64_t s = 0; s < steps_per_epoch && report.steps < limit; ++s) {
      std::vector<size_t> idx;
      std::vector<uint64_t> seeds;
      for (int64_t b = 0; b < config_.batch_size; ++b) {
        idx.push_back(order[static_cast<size_t>(s * config_.batch_size + b) % n]);
        seeds.push_back(mix({config_.seed, stage_key, static_cast<uint64_t>(epoch), static_cast<uint64_t>(s),
                             static_cast<uint64_t>(b)}));
      }
      auto batch = gather_batch(*data.train, idx, spec.clip_length, seeds, true);
      auto generator = at::detail::createCPUGenerator(
          mix({config_.seed, stage_key, static_cast<uint64_t>(report.steps), 0x9015eULL}));

      optimizer.zero_grad();
      auto fwd = forward_clip(model_, batch, spec.stage, config_.train_mode, config_.lambda, generator);
      check_finite(fwd.terms, spec.stage, epoch, report.steps);
      fwd.objective.backward();
      torch::nn::utils::clip_grad_norm_(params, config_.grad_clip_norm);
      optimizer.step();

      const double value = fwd.objective.item<double>();
      loss_sum += value;
      ++epoch_steps;
      if (on_step) on_step(spec.stage, report.steps, value);
      ++report.steps;
    }

    const auto val = validate(spec, *data.val);
    EpochMetrics m;
    m.stage = spec.stage;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = epoch_steps > 0 ? loss_sum / static_cast<double>(epoch_steps) : 0.0;
    m.val_loss = val.loss;
    m.bpp = val.bpp;
    m.psnr = val.psnr;
    m.steps = epoch_steps;
    append_metrics(config_.metrics_path, m);
    report.epochs.push_back(m);
    report.final_val_loss = val.loss;
    policy.step(val.loss);
  }

  if (!config_.checkpoint_dir.empty()) {
    // Stage-end snapshot carries this stage's optimizer and schedule state.
    CheckpointMeta meta;
    meta.codec = model_->config();
    meta.stage = std::string(to_string(spec.stage));
    meta.scheduler = policy.state();
    meta.run = config_.run_snapshot;
    meta.completed_stages = completed_before_;
    meta.completed_stages.push_back(meta.stage);
    std::filesystem::create_directories(config_.checkpoint_dir);
    save_checkpoint(config_.checkpoint_dir / ("stage_" + meta.stage + ".ckpt"), model_, meta, &optimizer);
    save_checkpoint(config_.checkpoint_dir / "latest.ckpt", model_, meta, &optimizer);
  }
  return report;
}

std::vector<StageReport> run_pretraining(ConditionalCodec& model, const TrainingData& data,
                                         const std::vector<StageSpec>& schedule, const TrainConfig& config,
                                         std::vector<std::string>& completed, std::optional<StageId> only) {
  Trainer trainer(model, config);
  std::vector<StageReport> reports;
  for (const auto& spec : schedule) {
    if (spec.stage == StageId::kFinetune) continue;
    if (only && spec.stage != *only) continue;
    const std::string name(to_string(spec.stage));
    if (std::find(completed.begin(), completed.end(), name) != completed.end()) continue;
    trainer.set_completed(completed);
    reports.push_back(trainer.run_stage(spec, data));
    completed.push_back(name);
  }
  unfreeze_all(model);
  return reports;
}

StageReport run_finetune(ConditionalCodec& model, const TrainingData& data, const StageSpec& spec,
                         const TrainConfig& config, std::vector<std::string>& completed) {
  if (spec.stage != StageId::kFinetune) fail(ErrorCategory::kConfig, "run_finetune needs the finetune stage spec");
  if (std::find(completed.begin(), completed.end(), "all") == completed.end()) {
    fail(ErrorCategory::kUsage, "finetuning requires a model that completed stage 'all'");
  }
  Trainer trainer(model, config);
  trainer.set_completed(completed);
  auto report = trainer.run_stage(spec, data);
  completed.push_back("finetune");
  unfreeze_all(model);
  return report;
}

}  // namespace condvc
