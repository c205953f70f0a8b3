#include "fh/config.hpp"

#include <fstream>
#include <sstream>

#include "fh/errors.hpp"
#include "fh/layers.hpp"

namespace fh {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr_initial > 0)) throw ConfigError("train: lr_initial must be positive");
  if (!(decay_factor > 0 && decay_factor <= 1)) throw ConfigError("train: decay_factor must be in (0, 1]");
  if (decay_period < 1) throw ConfigError("train: decay_period must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (stages.empty()) throw ConfigError("train: stages must not be empty");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i] < 1) throw ConfigError("train: stage sizes must be >= 1");
    if (i > 0 && stages[i] <= stages[i - 1]) throw ConfigError("train: stages must be strictly increasing");
  }
  if (!stage_epochs.empty() && stage_epochs.size() != stages.size())
    throw ConfigError("train: stage_epochs needs one entry per stage");
  for (int e : stage_epochs)
    if (e < 0) throw ConfigError("train: stage_epochs must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
    throw ConfigError("train: invalid optimizer moments");
  if (val_every < 0) throw ConfigError("train: val_every must be >= 0");
}

std::vector<int> TrainConfig::epochs_per_stage() const {
  if (!stage_epochs.empty()) return stage_epochs;
  const int n = static_cast<int>(stages.size());
  std::vector<int> out(n, epochs / n);
  for (int i = 0; i < epochs % n; ++i) ++out[n - 1 - i];
  return out;
}

RunConfig RunConfig::full() { return RunConfig{}; }

RunConfig RunConfig::desk() {
  RunConfig c;
  c.ingest.size = 64;
  c.generator.image_size = 64;
  c.generator.base_channels = 8;
  c.generator.unet_depth = 3;
  c.discriminator.image_size = 64;
  c.discriminator.base_channels = 8;
  c.discriminator.max_channels = 32;
  c.train.epochs = 12;
  c.train.decay_period = 3;
  c.ablation.stack_depths = {1, 2, 3, 4, 5};
  return c;
}

void RunConfig::validate() const {
  splits.validate();
  generator.validate();
  discriminator.validate();
  losses.validate(discriminator.tap_indices.size());
  train.validate();
  if (generator.image_size != discriminator.image_size || generator.image_size != ingest.size)
    throw ConfigError("config: generator, discriminator and ingest sizes differ (" +
                      std::to_string(generator.image_size) + ", " +
                      std::to_string(discriminator.image_size) + ", " + std::to_string(ingest.size) + ")");
  if (train.stages.back() > 5 || train.stages.front() < 1)
    throw ConfigError("config: stack sizes must lie in 1..5");
}

namespace {

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

NLOHMANN_JSON_SERIALIZE_ENUM(HeadAggregation, {{HeadAggregation::Mean, "mean"}, {HeadAggregation::Max, "max"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DiscriminatorMode, {{DiscriminatorMode::Image, "image"}, {DiscriminatorMode::Patch, "patch"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PixelNorm, {{PixelNorm::L1, "L1"}, {PixelNorm::L2, "L2"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PerceptualSign, {{PerceptualSign::MaximizeDiscrepancy, "maximize_discrepancy"},
                                              {PerceptualSign::MinimizeDiscrepancy, "minimize_discrepancy"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DecayUnit, {{DecayUnit::Epoch, "epoch"}, {DecayUnit::Step, "step"}})

void to_json(json& j, const GeneratorConfig& c) {
  j = json{{"num_unets", c.num_unets},           {"unet_depth", c.unet_depth},
           {"base_channels", c.base_channels},   {"dropout_rate", c.dropout_rate},
           {"dropout_blocks", c.dropout_blocks}, {"deep_supervision", c.deep_supervision},
           {"head_aggregation", c.head_aggregation}, {"image_size", c.image_size}};
}

void from_json(const json& j, GeneratorConfig& c) {
  get_if(j, "num_unets", c.num_unets);
  get_if(j, "unet_depth", c.unet_depth);
  get_if(j, "base_channels", c.base_channels);
  get_if(j, "dropout_rate", c.dropout_rate);
  get_if(j, "dropout_blocks", c.dropout_blocks);
  get_if(j, "deep_supervision", c.deep_supervision);
  get_if(j, "head_aggregation", c.head_aggregation);
  get_if(j, "image_size", c.image_size);
}

void to_json(json& j, const DiscriminatorConfig& c) {
  j = json{{"mode", c.mode},
           {"num_conv_layers", c.num_conv_layers},
           {"tap_indices", c.tap_indices},
           {"leaky_slope", c.leaky_slope},
           {"base_channels", c.base_channels},
           {"max_channels", c.max_channels},
           {"image_size", c.image_size}};
}

void from_json(const json& j, DiscriminatorConfig& c) {
  get_if(j, "mode", c.mode);
  get_if(j, "num_conv_layers", c.num_conv_layers);
  get_if(j, "tap_indices", c.tap_indices);
  get_if(j, "leaky_slope", c.leaky_slope);
  get_if(j, "base_channels", c.base_channels);
  get_if(j, "max_channels", c.max_channels);
  get_if(j, "image_size", c.image_size);
}

void to_json(json& j, const LossWeights& c) {
  j = json{{"alpha_perceptual", c.alpha_perceptual},
           {"alpha_pixel", c.alpha_pixel},
           {"alpha_adv", c.alpha_adv},
           {"lambda_per_tap", c.lambda_per_tap},
           {"pixel_norm", c.pixel_norm},
           {"lsgan_targets", {c.lsgan.a, c.lsgan.b, c.lsgan.c}},
           {"d_perceptual_weight", c.d_perceptual_weight},
           {"d_perceptual_sign", c.d_perceptual_sign}};
}

void from_json(const json& j, LossWeights& c) {
  get_if(j, "alpha_perceptual", c.alpha_perceptual);
  get_if(j, "alpha_pixel", c.alpha_pixel);
  get_if(j, "alpha_adv", c.alpha_adv);
  get_if(j, "lambda_per_tap", c.lambda_per_tap);
  get_if(j, "pixel_norm", c.pixel_norm);
  if (j.contains("lsgan_targets")) {
    const auto t = j.at("lsgan_targets").get<std::vector<double>>();
    if (t.size() != 3) throw ConfigError("losses: lsgan_targets is [a, b, c]");
    c.lsgan = {t[0], t[1], t[2]};
  }
  get_if(j, "d_perceptual_weight", c.d_perceptual_weight);
  get_if(j, "d_perceptual_sign", c.d_perceptual_sign);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr_initial", c.lr_initial},   {"decay_factor", c.decay_factor},
           {"decay_period", c.decay_period}, {"decay_unit", c.decay_unit},
           {"batch_size", c.batch_size},   {"epochs", c.epochs},
           {"stages", c.stages},           {"stage_epochs", c.stage_epochs},
           {"beta1", c.beta1},             {"beta2", c.beta2},
           {"eps", c.eps},                 {"val_every", c.val_every}};
}

void from_json(const json& j, TrainConfig& c) {
  get_if(j, "lr_initial", c.lr_initial);
  get_if(j, "decay_factor", c.decay_factor);
  get_if(j, "decay_period", c.decay_period);
  get_if(j, "decay_unit", c.decay_unit);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "epochs", c.epochs);
  get_if(j, "stages", c.stages);
  get_if(j, "stage_epochs", c.stage_epochs);
  get_if(j, "beta1", c.beta1);
  get_if(j, "beta2", c.beta2);
  get_if(j, "eps", c.eps);
  get_if(j, "val_every", c.val_every);
}

namespace {

json model_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"deterministic", c.deterministic},
              {"augment", c.augment},
              {"splits", {c.splits.train, c.splits.val, c.splits.test}},
              {"ingest",
               {{"size", c.ingest.size},
                {"apply_clahe", c.ingest.apply_clahe},
                {"clahe",
                 {{"clip_limit", c.ingest.clahe.clip_limit},
                  {"tiles_x", c.ingest.clahe.tiles_x},
                  {"tiles_y", c.ingest.clahe.tiles_y},
                  {"luminance_only", c.ingest.clahe.luminance_only}}}}},
              {"generator", c.generator},
              {"discriminator", c.discriminator},
              {"losses", c.losses},
              {"train", c.train},
              {"ablation", {{"stack_depths", c.ablation.stack_depths}}}};
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  j = model_json(c);
  j["data_root"] = c.data_root;
  j["data_prepared"] = c.data_prepared;
  j["out_dir"] = c.out_dir;
  j["colormap"] = c.colormap;
  j["lpips_checkpoint"] = c.lpips_checkpoint;
  j["ablation"]["lpips_checkpoint"] = c.ablation.lpips_checkpoint;
}

void from_json(const json& j, RunConfig& c) {
  get_if(j, "data_root", c.data_root);
  get_if(j, "data_prepared", c.data_prepared);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "colormap", c.colormap);
  get_if(j, "lpips_checkpoint", c.lpips_checkpoint);
  get_if(j, "seed", c.seed);
  get_if(j, "deterministic", c.deterministic);
  get_if(j, "augment", c.augment);
  if (j.contains("splits")) {
    const auto s = j.at("splits").get<std::vector<double>>();
    if (s.size() != 3) throw ConfigError("config: splits is [train, val, test]");
    c.splits = {s[0], s[1], s[2]};
  }
  if (j.contains("ingest")) {
    const auto& in = j.at("ingest");
    get_if(in, "size", c.ingest.size);
    get_if(in, "apply_clahe", c.ingest.apply_clahe);
    if (in.contains("clahe")) {
      const auto& cl = in.at("clahe");
      get_if(cl, "clip_limit", c.ingest.clahe.clip_limit);
      get_if(cl, "tiles_x", c.ingest.clahe.tiles_x);
      get_if(cl, "tiles_y", c.ingest.clahe.tiles_y);
      get_if(cl, "luminance_only", c.ingest.clahe.luminance_only);
    }
  }
  if (j.contains("generator")) from_json(j.at("generator"), c.generator);
  if (j.contains("discriminator")) from_json(j.at("discriminator"), c.discriminator);
  if (j.contains("losses")) from_json(j.at("losses"), c.losses);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("ablation")) {
    get_if(j.at("ablation"), "stack_depths", c.ablation.stack_depths);
    get_if(j.at("ablation"), "lpips_checkpoint", c.ablation.lpips_checkpoint);
  }
}

std::string RunConfig::digest() const { return bytes_digest(model_json(*this).dump()); }

bool RunConfig::operator==(const RunConfig& o) const {
  json a, b;
  to_json(a, *this);
  to_json(b, o);
  return a == b;
}

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  RunConfig cfg = base;
  try {
    from_json(json::parse(in), cfg);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path);
  json j;
  to_json(j, cfg);
  out << j.dump(2) << '\n';
}

}  // namespace fh
