#include "condvc/run_config.hpp"

#include <fstream>

#include "condvc/errors.hpp"

namespace condvc {

using nlohmann::json;

namespace {

template <typename T>
T read(const json& tree, const std::string& path) {
  const json* node = &tree;
  size_t begin = 0;
  while (begin <= path.size()) {
    const auto end = path.find('.', begin);
    const auto key = path.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    if (!node->is_object() || !node->contains(key)) fail(ErrorCategory::kConfig, "missing config key '" + path + "'");
    node = &node->at(key);
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    fail(ErrorCategory::kConfig, "config key '" + path + "' has the wrong type: " + node->dump());
  }
}

template <typename Parse>
auto read_enum(const json& tree, const std::string& path, Parse parse) {
  const auto name = read<std::string>(tree, path);
  try {
    return parse(name);
  } catch (const Error& e) {
    fail(ErrorCategory::kConfig, path + ": " + e.what());
  }
}

CodingMode parse_coding_mode(std::string_view name) {
  if (name == "train_noise") return CodingMode::kTrainNoise;
  if (name == "train_ste") return CodingMode::kTrainSte;
  fail(ErrorCategory::kConfig, "training mode must be 'train_noise' or 'train_ste', got '" + std::string(name) + "'");
}

void merge_strict(json& base, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) fail(ErrorCategory::kConfig, "config section '" + prefix + "' must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const auto path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorCategory::kConfig, "unknown config key '" + path + "'");
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), path);
    } else {
      slot = it.value();
    }
  }
}

}  // namespace

json codec_config_to_json(const CodecConfig& c) {
  return {{"me_channels", c.me_channels},
          {"mv_transform_channels", c.mv_transform_channels},
          {"mv_latent_channels", c.mv_latent_channels},
          {"mv_hyper_channels", c.mv_hyper_channels},
          {"context_channels", c.context_channels},
          {"transform_channels", c.transform_channels},
          {"latent_channels", c.latent_channels},
          {"hyper_channels", c.hyper_channels},
          {"prior_channels", c.prior_channels},
          {"intra_transform_channels", c.intra_transform_channels},
          {"intra_latent_channels", c.intra_latent_channels},
          {"intra_hyper_channels", c.intra_hyper_channels},
          {"density_filters", c.density_filters},
          {"entropy_family", std::string(to_string(c.entropy_family))},
          {"lambda", c.lambda},
          {"extensions",
           {{"tcm_multiscale", c.extensions.tcm_multiscale},
            {"hem_dual_prior", c.extensions.hem_dual_prior},
            {"dc_quadtree", c.extensions.dc_quadtree}}}};
}

CodecConfig codec_config_from_json(const json& j) {
  json tree = codec_config_to_json(CodecConfig{});
  merge_strict(tree, j, "codec");
  const json root = {{"codec", tree}};
  CodecConfig c;
  c.me_channels = read<int64_t>(root, "codec.me_channels");
  c.mv_transform_channels = read<int64_t>(root, "codec.mv_transform_channels");
  c.mv_latent_channels = read<int64_t>(root, "codec.mv_latent_channels");
  c.mv_hyper_channels = read<int64_t>(root, "codec.mv_hyper_channels");
  c.context_channels = read<int64_t>(root, "codec.context_channels");
  c.transform_channels = read<int64_t>(root, "codec.transform_channels");
  c.latent_channels = read<int64_t>(root, "codec.latent_channels");
  c.hyper_channels = read<int64_t>(root, "codec.hyper_channels");
  c.prior_channels = read<int64_t>(root, "codec.prior_channels");
  c.intra_transform_channels = read<int64_t>(root, "codec.intra_transform_channels");
  c.intra_latent_channels = read<int64_t>(root, "codec.intra_latent_channels");
  c.intra_hyper_channels = read<int64_t>(root, "codec.intra_hyper_channels");
  c.density_filters = read<std::vector<int64_t>>(root, "codec.density_filters");
  c.entropy_family = read_enum(root, "codec.entropy_family", parse_entropy_family);
  c.lambda = read<double>(root, "codec.lambda");
  c.extensions.tcm_multiscale = read<bool>(root, "codec.extensions.tcm_multiscale");
  c.extensions.hem_dual_prior = read<bool>(root, "codec.extensions.hem_dual_prior");
  c.extensions.dc_quadtree = read<bool>(root, "codec.extensions.dc_quadtree");
  return c;
}

json RunConfig::to_json() const {
  return {{"codec", codec_config_to_json(codec)},
          {"train",
           {{"batch_size", train.batch_size},
            {"pretrain_clip_length", train.pretrain_clip_length},
            {"finetune_clip_length", train.finetune_clip_length},
            {"crop", train.crop},
            {"pretrain_epochs", train.pretrain_epochs},
            {"finetune_epochs", train.finetune_epochs},
            {"pretrain_lr", train.pretrain_lr},
            {"finetune_lr", train.finetune_lr},
            {"plateau_factor", train.plateau_factor},
            {"plateau_patience", train.plateau_patience},
            {"grad_clip_norm", train.grad_clip_norm},
            {"steps_per_epoch", train.steps_per_epoch},
            {"max_steps_per_stage", train.max_steps_per_stage},
            {"mode", std::string(to_string(train.train_mode))},
            {"deterministic", train.deterministic},
            {"index", train_index.string()},
            {"val_index", val_index.string()},
            {"val_clips", val_clips},
            {"augment",
             {{"p_hflip", augment.p_hflip},
              {"p_vflip", augment.p_vflip},
              {"p_shuffle", augment.p_shuffle},
              {"shuffle_mode", std::string(to_string(augment.shuffle_mode))}}}}},
          {"eval",
           {{"intra_period", eval.intra_period},
            {"n_frames", eval.n_frames},
            {"datasets", eval.datasets},
            {"format", std::string(to_string(eval.format))},
            {"width", eval.width},
            {"height", eval.height},
            {"matrix", std::string(to_string(eval.matrix))}}},
          {"io",
           {{"checkpoint_dir", io.checkpoint_dir.string()},
            {"metrics_dir", io.metrics_dir.string()},
            {"seed", io.seed}}}};
}

RunConfig RunConfig::from_json(const json& j) {
  json tree = RunConfig{}.to_json();
  merge_strict(tree, j, "");
  RunConfig r;
  r.codec = codec_config_from_json(tree.at("codec"));
  auto& t = r.train;
  t.batch_size = read<int64_t>(tree, "train.batch_size");
  t.pretrain_clip_length = read<int64_t>(tree, "train.pretrain_clip_length");
  t.finetune_clip_length = read<int64_t>(tree, "train.finetune_clip_length");
  t.crop = read<int64_t>(tree, "train.crop");
  t.pretrain_epochs = read<int>(tree, "train.pretrain_epochs");
  t.finetune_epochs = read<int>(tree, "train.finetune_epochs");
  t.pretrain_lr = read<double>(tree, "train.pretrain_lr");
  t.finetune_lr = read<double>(tree, "train.finetune_lr");
  t.plateau_factor = read<double>(tree, "train.plateau_factor");
  t.plateau_patience = read<int>(tree, "train.plateau_patience");
  t.grad_clip_norm = read<double>(tree, "train.grad_clip_norm");
  t.steps_per_epoch = read<int64_t>(tree, "train.steps_per_epoch");
  t.max_steps_per_stage = read<int64_t>(tree, "train.max_steps_per_stage");
  t.train_mode = read_enum(tree, "train.mode", parse_coding_mode);
  t.deterministic = read<bool>(tree, "train.deterministic");
  r.train_index = read<std::string>(tree, "train.index");
  r.val_index = read<std::string>(tree, "train.val_index");
  r.val_clips = read<int64_t>(tree, "train.val_clips");
  r.augment.p_hflip = read<double>(tree, "train.augment.p_hflip");
  r.augment.p_vflip = read<double>(tree, "train.augment.p_vflip");
  r.augment.p_shuffle = read<double>(tree, "train.augment.p_shuffle");
  r.augment.shuffle_mode = read_enum(tree, "train.augment.shuffle_mode", parse_shuffle_mode);
  r.eval.intra_period = read<int64_t>(tree, "eval.intra_period");
  r.eval.n_frames = read<int64_t>(tree, "eval.n_frames");
  r.eval.datasets = read<std::vector<std::string>>(tree, "eval.datasets");
  r.eval.format = read_enum(tree, "eval.format", parse_sequence_format);
  r.eval.width = read<int64_t>(tree, "eval.width");
  r.eval.height = read<int64_t>(tree, "eval.height");
  r.eval.matrix = read_enum(tree, "eval.matrix", parse_color_matrix);
  r.io.checkpoint_dir = read<std::string>(tree, "io.checkpoint_dir");
  r.io.metrics_dir = read<std::string>(tree, "io.metrics_dir");
  r.io.seed = read<uint64_t>(tree, "io.seed");
  r.train.lambda = r.codec.lambda;
  r.train.seed = r.io.seed;
  return r;
}

void RunConfig::validate() const {
  codec.validate();
  train.validate();
  augment.validate();
  if (val_clips < 1) fail(ErrorCategory::kConfig, "train.val_clips must be >= 1");
  if (eval.intra_period < 1) fail(ErrorCategory::kConfig, "eval.intra_period must be >= 1");
  if (eval.n_frames < 1) fail(ErrorCategory::kConfig, "eval.n_frames must be >= 1");
  if (eval.width < 0 || eval.height < 0) fail(ErrorCategory::kConfig, "eval.width/eval.height must be >= 0");
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorCategory::kUsage, "override '" + assignment + "' must look like key.path=value");
  }
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  json* node = &tree;
  size_t begin = 0;
  while (true) {
    const auto end = path.find('.', begin);
    const auto key = path.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    if (!node->is_object() || !node->contains(key)) fail(ErrorCategory::kConfig, "unknown config key '" + path + "'");
    node = &(*node)[key];
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  if (node->is_object()) fail(ErrorCategory::kConfig, "config key '" + path + "' is a section, not a value");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded() || (node->is_string() && !value.is_string())) value = text;
  *node = value;
}

RunConfig load_run_config(const std::filesystem::path& config_path, const std::vector<std::string>& overrides) {
  json tree = RunConfig{}.to_json();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) fail(ErrorCategory::kIo, "cannot read config file '" + config_path.string() + "'");
    json file;
    try {
      file = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
      fail(ErrorCategory::kConfig, "config file '" + config_path.string() + "' is not valid JSON: " + e.what());
    }
    merge_strict(tree, file, "");
  }
  for (const auto& o : overrides) apply_override(tree, o);
  auto config = RunConfig::from_json(tree);
  config.validate();
  return config;
}

}  // namespace condvc
