#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fh/config.hpp"
#include "fh/data.hpp"
#include "fh/discriminator.hpp"
#include "fh/generator.hpp"
#include "fh/losses.hpp"

namespace fh {

/// lr_initial * decay_factor^floor(t / decay_period), with t the stage-local
/// epoch (or global step when decay_unit is Step).
double lr_at(long t, const TrainConfig& cfg);

/// Adaptive-moment optimiser with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update of every parameter in `store` from its accumulated gradient.
  /// Parameters without a gradient are treated as having a zero gradient.
  void step(ParameterStore<float>& store, double lr);

  long steps() const { return t_; }
  /// Moments keyed "<param>.m" / "<param>.v", each prefixed by `prefix`.
  TensorMap<float> state(const std::string& prefix) const;
  void load(const TensorMap<float>& state, const std::string& prefix, long steps);

 private:
  double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::map<std::string, std::pair<Tensor<float>, Tensor<float>>> moments_;
};

struct Batch {
  Tensor<float> x;  // fundus, N x 3 x S x S in [0, 1]
  Tensor<float> y;  // heightmap, N x 3 x S x S in [0, 1]
};

Batch make_batch(const std::vector<const SamplePair*>& samples);

struct StepResult {
  LossBreakdown generator;
  double discriminator = 0;
};

/// One discriminator update (on the detached generator output) followed by
/// one generator update. Throws TrainingDivergence on a non-finite loss.
StepResult train_step(Generator<float>& gen, Discriminator<float>& disc, Adam& opt_g, Adam& opt_d,
                      const Batch& batch, const LossWeights& weights, double lr,
                      std::uint64_t noise_seed);

/// Records which samples the trainer read, by split.
class DataAccessLog {
 public:
  void record(Split split, const std::string& id) { counts_[split][id]++; }
  bool touched(Split split) const { return counts_.contains(split) && !counts_.at(split).empty(); }
  const std::map<std::string, long>& reads(Split split) const;

 private:
  std::map<Split, std::map<std::string, long>> counts_;
  static const std::map<std::string, long> empty_;
};

struct LossRow {
  long step = 0;
  LossBreakdown g;
  double d_loss = 0;
  int stage = 0;
  int epoch = 0;
};

/// Formats a row as "step,adv,pix,per,total,d_loss,stage,epoch".
std::string format_loss_row(const LossRow& row);

/// Checkpoint files: `path` holds the tensors, `path + ".json"` the sidecar.
void save_checkpoint(const std::string& path, const TensorMap<float>& tensors, const nlohmann::json& sidecar);
std::pair<TensorMap<float>, nlohmann::json> load_checkpoint(const std::string& path);
/// Digest over the tensor file and its sidecar.
std::string checkpoint_digest(const std::string& path);

/// Rebuilds the generator stored in a checkpoint ("generator." tensors).
Generator<float> load_generator(const std::string& path);
/// Rebuilds the discriminator stored in a checkpoint ("discriminator." tensors).
Discriminator<float> load_discriminator(const std::string& path);

struct FitOptions {
  /// Output root; checkpoints/ and logs/ are created below it. Empty: no files.
  std::string out_dir;
  /// Stop after this many epochs have run in this call (across stages).
  std::optional<int> max_epochs;
  /// Called after every step.
  std::function<void(const LossRow&)> on_step;
  /// Receives warnings (e.g. a resumed run with a different batch size).
  std::function<void(const std::string&)> on_warning;
};

struct FitResult {
  /// One checkpoint per completed stage.
  std::vector<std::string> stage_checkpoints;
  /// Checkpoint written whenever an epoch ends; resume starts from here.
  std::string latest_checkpoint;
  std::vector<LossRow> losses;
  bool finished = false;
};

/// Progressive training: for each stage size k, build (first stage) or grow
/// the generator to k U-Nets, train for the stage's epoch budget and write a
/// stage checkpoint. The discriminator and its optimiser persist across
/// stages; the generator optimiser restarts with each stage. Data order and
/// dropout noise are pure functions of (seed, stage, epoch, step).
class Trainer {
 public:
  Trainer(RunConfig cfg, Partition data);

  FitResult fit(const FitOptions& opts = {});
  /// Continues from a checkpoint written by fit. Training resumes at the
  /// checkpoint's stage and epoch; the config must describe the same model.
  FitResult resume(const std::string& checkpoint, const FitOptions& opts = {});

  const DataAccessLog& access_log() const { return log_; }
  Generator<float>& generator() { return *gen_; }
  Discriminator<float>& discriminator() { return *disc_; }
  const RunConfig& config() const { return cfg_; }

  /// Mean pixel L2 of the current generator over the validation split (eval mode).
  double validation_loss();

 private:
  struct Position {
    std::size_t stage_index = 0;
    int epoch = 0;  // next epoch to run within the stage
    long step = 0;  // global step counter
  };
  FitResult run(Position start, const FitOptions& opts);
  void write_checkpoint(const std::string& path, const Position& next) const;
  std::uint64_t stage_seed(std::size_t stage_index) const;

  RunConfig cfg_;
  Partition data_;
  DataAccessLog log_;
  std::unique_ptr<Generator<float>> gen_;
  std::unique_ptr<Discriminator<float>> disc_;
  Adam opt_g_, opt_d_;
  int trained_batch_size_ = 0;
};

/// Builds train/val/test from a corpus: flip augmentation of every pair if
/// enabled, then a split grouped by source image so that the flipped copies
/// of one fundus never straddle two splits.
Partition prepare_partition(const std::vector<SamplePair>& corpus, const RunConfig& cfg);

}  // namespace fh
