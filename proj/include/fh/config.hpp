#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fh/data.hpp"
#include "fh/discriminator.hpp"
#include "fh/generator.hpp"
#include "fh/losses.hpp"

namespace fh {

enum class DecayUnit { Epoch, Step };

struct TrainConfig {
  double lr_initial = 1e-3;
  double decay_factor = 0.9;
  int decay_period = 30;
  DecayUnit decay_unit = DecayUnit::Epoch;
  int batch_size = 8;
  /// Total epochs, shared evenly by the stages unless stage_epochs is set.
  int epochs = 250;
  std::vector<int> stages{1, 2, 3};
  std::vector<int> stage_epochs;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Evaluate pixel L2 on the validation split every this many epochs (0 = never).
  int val_every = 1;

  void validate() const;
  /// Epoch budget of each stage.
  std::vector<int> epochs_per_stage() const;
  bool operator==(const TrainConfig&) const = default;
};

struct AblationConfig {
  /// Stack sizes for the stack-depth sweep.
  std::vector<int> stack_depths{1, 2, 3, 4, 5};
  /// Optional frozen discriminator for LPIPS; if empty, the first sweep
  /// point's discriminator is pinned and reused for every point.
  std::string lpips_checkpoint;
  bool operator==(const AblationConfig&) const = default;
};

struct RunConfig {
  std::string data_root;
  /// The corpus under data_root was written by `prep` and is used as-is.
  bool data_prepared = false;
  std::string out_dir = "out";
  /// Colour map JSON; empty selects the built-in five-stop map.
  std::string colormap;
  std::uint64_t seed = 0;
  bool deterministic = true;
  /// Add flipped copies of every pair before splitting.
  bool augment = true;
  SplitRatios splits;
  IngestConfig ingest;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LossWeights losses;
  TrainConfig train;
  AblationConfig ablation;
  /// Checkpoint of the frozen discriminator used for LPIPS during eval.
  std::string lpips_checkpoint;

  /// Full-size defaults.
  static RunConfig full();
  /// 64x64 images, small channel plans and a short schedule.
  static RunConfig desk();

  void validate() const;
  /// SHA-256 of the canonical JSON without paths.
  std::string digest() const;
  bool operator==(const RunConfig&) const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);
void to_json(nlohmann::json& j, const LossWeights& c);
void from_json(const nlohmann::json& j, LossWeights& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep the values already in `c`, so a partial file overlays a preset.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::string& path, const RunConfig& base = RunConfig::full());
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace fh
