#include "fh/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fh/errors.hpp"
#include "fh/rng.hpp"

namespace fh {

namespace fs = std::filesystem;
using nlohmann::json;

double lr_at(long t, const TrainConfig& cfg) {
  if (t < 0) throw std::invalid_argument("lr_at: negative epoch");
  return cfg.lr_initial * std::pow(cfg.decay_factor, static_cast<double>(t / cfg.decay_period));
}

// --- Adam ------------------------------------------------------------------------

void Adam::step(ParameterStore<float>& store, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  for (const auto& [name, var] : store.parameters()) {
    Tensor<float>& p = var.node()->value;
    auto& [m, v] = moments_[name];
    if (m.empty()) {
      m = Tensor<float>(p.shape());
      v = Tensor<float>(p.shape());
    }
    const Tensor<float>& g = var.grad();
    const bool has_grad = !g.empty();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float gi = has_grad ? g[i] : 0.f;
      m[i] = b1 * m[i] + (1 - b1) * gi;
      v[i] = b2 * v[i] + (1 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

TensorMap<float> Adam::state(const std::string& prefix) const {
  TensorMap<float> out;
  for (const auto& [name, mv] : moments_) {
    out.emplace(prefix + name + ".m", mv.first);
    out.emplace(prefix + name + ".v", mv.second);
  }
  return out;
}

void Adam::load(const TensorMap<float>& state, const std::string& prefix, long steps) {
  moments_.clear();
  for (const auto& [key, t] : state) {
    if (key.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string rest = key.substr(prefix.size());
    if (rest.size() < 2) continue;
    const std::string name = rest.substr(0, rest.size() - 2);
    if (rest.ends_with(".m")) moments_[name].first = t;
    else if (rest.ends_with(".v")) moments_[name].second = t;
  }
  t_ = steps;
}

// --- one step ----------------------------------------------------------------------

Batch make_batch(const std::vector<const SamplePair*>& samples) {
  std::vector<RgbImage> xs, ys;
  for (const auto* s : samples) {
    if (s->fundus.domain != ValueDomain::Normalized0To1)
      throw DataError("training sample " + s->id + " is not normalised");
    xs.push_back(s->fundus.pixels);
    ys.push_back(s->target.rgb);
  }
  return {to_tensor<float>(xs), to_tensor<float>(ys)};
}

StepResult train_step(Generator<float>& gen, Discriminator<float>& disc, Adam& opt_g, Adam& opt_d,
                      const Batch& batch, const LossWeights& weights, double lr,
                      std::uint64_t noise_seed) {
  const auto x = ag::constant(batch.x);
  const auto y = ag::constant(batch.y);
  const auto fake = gen.forward(x, Mode::Train, noise_seed).final;

  StepResult result;
  {
    const auto detached = ag::detach(fake);
    const auto real = disc.forward(x, y, Mode::Train);
    const auto judged = disc.forward(x, detached, Mode::Train);
    const auto lsgan = lsgan_d_loss(real.probability, judged.probability, weights.lsgan);
    ag::Var<float> d_total = lsgan;
    if (weights.d_perceptual_weight != 0.0) {
      const auto per = perceptual_loss(real.taps, judged.taps, weights.lambda_per_tap);
      d_total = discriminator_total(lsgan, per, weights.d_perceptual_weight, weights.d_perceptual_sign);
    }
    result.discriminator = static_cast<double>(d_total.item());
    if (!std::isfinite(result.discriminator)) throw TrainingDivergence("discriminator");
    disc.store().zero_grad();
    ag::backward(d_total);
    opt_d.step(disc.store(), lr);
  }

  FeatureTaps<float> real_taps;
  {
    ag::NoGradGuard no_grad;
    real_taps = disc.forward(x, y, Mode::Train).taps;
  }
  const auto judged = disc.forward(x, fake, Mode::Train);
  LossParts<float> parts{lsgan_g_loss(judged.probability, weights.lsgan),
                         pixel_loss(fake, y, weights.pixel_norm),
                         perceptual_loss(real_taps, judged.taps, weights.lambda_per_tap)};
  const auto objective = generator_total(parts, weights);
  result.generator = objective.breakdown;
  gen.store().zero_grad();
  ag::backward(objective.total);
  opt_g.step(gen.store(), lr);
  return result;
}

// --- logging ---------------------------------------------------------------------------

const std::map<std::string, long> DataAccessLog::empty_;

const std::map<std::string, long>& DataAccessLog::reads(Split split) const {
  auto it = counts_.find(split);
  return it == counts_.end() ? empty_ : it->second;
}

std::string format_loss_row(const LossRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d", r.step, r.g.adversarial, r.g.pixel,
                r.g.perceptual, r.g.total, r.d_loss, r.stage, r.epoch);
  return buf;
}

// --- checkpoints -----------------------------------------------------------------------

void save_checkpoint(const std::string& path, const TensorMap<float>& tensors, const json& sidecar) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  save_tensor_map(path, tensors);
  std::ofstream out(path + ".json");
  if (!out) throw CheckpointError("cannot write " + path + ".json", {});
  out << sidecar.dump(2) << '\n';
}

std::pair<TensorMap<float>, json> load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path, {});
  std::ifstream in(path + ".json");
  if (!in) throw CheckpointError("checkpoint sidecar not found: " + path + ".json", {});
  json sidecar;
  try {
    sidecar = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(path + ".json: " + e.what(), {});
  }
  return {load_tensor_map<float>(path), std::move(sidecar)};
}

std::string checkpoint_digest(const std::string& path) {
  return bytes_digest(file_digest(path) + file_digest(path + ".json"));
}

namespace {

TensorMap<float> with_prefix(const TensorMap<float>& m, const std::string& prefix) {
  TensorMap<float> out;
  for (const auto& [k, v] : m) out.emplace(prefix + k, v);
  return out;
}

TensorMap<float> strip_prefix(const TensorMap<float>& m, const std::string& prefix) {
  TensorMap<float> out;
  for (const auto& [k, v] : m)
    if (k.compare(0, prefix.size(), prefix) == 0) out.emplace(k.substr(prefix.size()), v);
  return out;
}

json model_config(const RunConfig& cfg) {
  json j;
  to_json(j, cfg);
  for (const char* key : {"data_root", "out_dir", "colormap", "lpips_checkpoint", "data_prepared"}) j.erase(key);
  j["ablation"].erase("lpips_checkpoint");
  return j;
}

std::uint64_t generator_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, 0x6E4); }
std::uint64_t discriminator_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, 0xD15); }

}  // namespace

Generator<float> load_generator(const std::string& path) {
  auto [tensors, sidecar] = load_checkpoint(path);
  GeneratorConfig gc;
  from_json(sidecar.at("generator"), gc);
  Generator<float> g(gc, sidecar.at("generator_seed").get<std::uint64_t>());
  const auto state = strip_prefix(tensors, "generator.");
  const auto bad = g.store().mismatches(state);
  if (!bad.empty()) throw CheckpointError(path + ": generator tensors do not match its config", bad);
  g.store().load(state);
  return g;
}

Discriminator<float> load_discriminator(const std::string& path) {
  auto [tensors, sidecar] = load_checkpoint(path);
  DiscriminatorConfig dc;
  from_json(sidecar.at("discriminator"), dc);
  Discriminator<float> d(dc, sidecar.at("discriminator_seed").get<std::uint64_t>());
  const auto state = strip_prefix(tensors, "discriminator.");
  const auto bad = d.store().mismatches(state);
  if (!bad.empty()) throw CheckpointError(path + ": discriminator tensors do not match its config", bad);
  d.store().load(state);
  return d;
}

// --- trainer -----------------------------------------------------------------------------

Partition prepare_partition(const std::vector<SamplePair>& corpus, const RunConfig& cfg) {
  return make_splits(cfg.augment ? augment_all(corpus) : corpus, cfg.splits, cfg.seed);
}

Trainer::Trainer(RunConfig cfg, Partition data) : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  if (data_.train.empty()) throw DataError("trainer: empty training split");
  for (const auto* split : {&data_.train, &data_.val})
    for (const auto& p : *split)
      if (p.fundus.pixels.height != cfg_.generator.image_size || p.fundus.pixels.width != cfg_.generator.image_size ||
          !p.fundus.pixels.same_size(p.target.rgb))
        throw DataError("trainer: sample " + p.id + " is not " + std::to_string(cfg_.generator.image_size) +
                        "x" + std::to_string(cfg_.generator.image_size));
}

std::uint64_t Trainer::stage_seed(std::size_t stage_index) const {
  return derive_seed(cfg_.seed, 0x57A6E000 + stage_index);
}

double Trainer::validation_loss() {
  if (data_.val.empty()) return 0.0;
  ag::NoGradGuard no_grad;
  double sum = 0;
  const auto bs = static_cast<std::size_t>(cfg_.train.batch_size);
  for (std::size_t i = 0; i < data_.val.size(); i += bs) {
    std::vector<const SamplePair*> samples;
    for (std::size_t j = i; j < std::min(i + bs, data_.val.size()); ++j) {
      samples.push_back(&data_.val[j]);
      log_.record(Split::Val, data_.val[j].id);
    }
    const Batch b = make_batch(samples);
    const auto out = gen_->forward(b.x, Mode::Eval).final;
    sum += pixel_loss(out, ag::constant(b.y), PixelNorm::L2).item() * static_cast<double>(samples.size());
  }
  return sum / static_cast<double>(data_.val.size());
}

void Trainer::write_checkpoint(const std::string& path, const Position& next) const {
  TensorMap<float> tensors = with_prefix(gen_->store().state(), "generator.");
  tensors.merge(with_prefix(disc_->store().state(), "discriminator."));
  tensors.merge(opt_g_.state("opt_g."));
  tensors.merge(opt_d_.state("opt_d."));
  json side;
  side["config"] = model_config(cfg_);
  side["generator"] = gen_->config();
  side["discriminator"] = disc_->config();
  side["generator_seed"] = gen_->seed();
  side["discriminator_seed"] = discriminator_seed(cfg_);
  side["seed"] = cfg_.seed;
  side["stage"] = gen_->config().num_unets;
  side["stage_index"] = next.stage_index;
  side["epoch"] = next.epoch;
  side["step"] = next.step;
  side["parameter_count"] = gen_->parameter_count();
  side["discriminator_parameter_count"] = disc_->parameter_count();
  side["opt_g_steps"] = opt_g_.steps();
  side["opt_d_steps"] = opt_d_.steps();
  side["batch_size"] = cfg_.train.batch_size;
  // Data order and dropout masks are derived from these counters and the seed.
  side["rng"] = {{"scheme", "counter"}, {"stage_index", next.stage_index}, {"epoch", next.epoch}, {"step", next.step}};
  save_checkpoint(path, tensors, side);
}

FitResult Trainer::fit(const FitOptions& opts) {
  gen_.reset();
  disc_ = std::make_unique<Discriminator<float>>(cfg_.discriminator, discriminator_seed(cfg_));
  opt_d_ = Adam(cfg_.train.beta1, cfg_.train.beta2, cfg_.train.eps);
  trained_batch_size_ = cfg_.train.batch_size;
  if (!opts.out_dir.empty()) {
    fs::create_directories(fs::path(opts.out_dir) / "logs");
    std::ofstream(fs::path(opts.out_dir) / "logs" / "loss.csv") << "step,adv,pix,per,total,d_loss,stage,epoch\n";
    std::ofstream(fs::path(opts.out_dir) / "logs" / "val.csv") << "stage,epoch,val_pixel_l2\n";
  }
  return run(Position{}, opts);
}

FitResult Trainer::resume(const std::string& checkpoint, const FitOptions& opts) {
  auto [tensors, side] = load_checkpoint(checkpoint);
  if (side.at("config").at("generator") != model_config(cfg_).at("generator") ||
      side.at("config").at("discriminator") != model_config(cfg_).at("discriminator") ||
      side.at("config").at("train").at("stages") != model_config(cfg_).at("train").at("stages") ||
      side.at("seed").get<std::uint64_t>() != cfg_.seed)
    throw ConfigError("resume: " + checkpoint + " was written for a different model, stage plan or seed");
  trained_batch_size_ = side.at("batch_size").get<int>();
  if (trained_batch_size_ != cfg_.train.batch_size && opts.on_warning)
    opts.on_warning("resume: batch size changed from " + std::to_string(trained_batch_size_) + " to " +
                    std::to_string(cfg_.train.batch_size) + "; the loss trajectory will differ from the original run");

  GeneratorConfig gc;
  from_json(side.at("generator"), gc);
  gen_ = std::make_unique<Generator<float>>(gc, side.at("generator_seed").get<std::uint64_t>());
  gen_->store().load(strip_prefix(tensors, "generator."));
  disc_ = std::make_unique<Discriminator<float>>(cfg_.discriminator, discriminator_seed(cfg_));
  disc_->store().load(strip_prefix(tensors, "discriminator."));
  opt_g_ = Adam(cfg_.train.beta1, cfg_.train.beta2, cfg_.train.eps);
  opt_g_.load(tensors, "opt_g.", side.at("opt_g_steps").get<long>());
  opt_d_ = Adam(cfg_.train.beta1, cfg_.train.beta2, cfg_.train.eps);
  opt_d_.load(tensors, "opt_d.", side.at("opt_d_steps").get<long>());

  Position pos{side.at("stage_index").get<std::size_t>(), side.at("epoch").get<int>(), side.at("step").get<long>()};
  if (!opts.out_dir.empty()) {
    // Keep the log up to the checkpoint, dropping rows written after it.
    const fs::path logs = fs::path(opts.out_dir) / "logs";
    fs::create_directories(logs);
    std::vector<std::string> kept{"step,adv,pix,per,total,d_loss,stage,epoch"};
    if (std::ifstream in(logs / "loss.csv"); in) {
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line))
        if (!line.empty() && std::stol(line.substr(0, line.find(','))) <= pos.step) kept.push_back(line);
    }
    std::ofstream out(logs / "loss.csv");
    for (const auto& l : kept) out << l << '\n';
    if (!fs::exists(logs / "val.csv")) std::ofstream(logs / "val.csv") << "stage,epoch,val_pixel_l2\n";
  }
  return run(pos, opts);
}

FitResult Trainer::run(Position pos, const FitOptions& opts) {
  const auto& tc = cfg_.train;
  const auto budget = tc.epochs_per_stage();
  const auto bs = static_cast<std::size_t>(tc.batch_size);
  const bool files = !opts.out_dir.empty();
  const fs::path root(opts.out_dir);
  std::ofstream loss_csv, val_csv;
  if (files) {
    fs::create_directories(root / "checkpoints");
    loss_csv.open(root / "logs" / "loss.csv", std::ios::app);
    val_csv.open(root / "logs" / "val.csv", std::ios::app);
  }

  FitResult result;
  std::deque<LossBreakdown> recent;
  int epochs_run = 0;
  auto stop_requested = [&] { return opts.max_epochs && epochs_run >= *opts.max_epochs; };

  for (; pos.stage_index < tc.stages.size(); ++pos.stage_index, pos.epoch = 0) {
    const int k = tc.stages[pos.stage_index];
    if (pos.epoch == 0) {
      if (!gen_) {
        GeneratorConfig gc = cfg_.generator;
        gc.num_unets = k;
        gen_ = std::make_unique<Generator<float>>(gc, generator_seed(cfg_));
      }
      while (gen_->config().num_unets < k)
        gen_ = std::make_unique<Generator<float>>(grow_stack(*gen_, gen_->store().state()));
      if (gen_->config().num_unets != k)
        throw ConfigError("trainer: generator has " + std::to_string(gen_->config().num_unets) +
                          " U-Nets but stage " + std::to_string(pos.stage_index + 1) + " wants " + std::to_string(k));
      opt_g_ = Adam(tc.beta1, tc.beta2, tc.eps);
    }
    const std::uint64_t sseed = stage_seed(pos.stage_index);
    for (; pos.epoch < budget[pos.stage_index]; ++pos.epoch) {
      if (stop_requested()) {
        result.latest_checkpoint = files ? (root / "checkpoints" / "latest.ckpt").string() : "";
        if (files) write_checkpoint(result.latest_checkpoint, pos);
        return result;
      }
      const auto order = epoch_order(data_.train.size(), sseed,
                                     static_cast<std::uint64_t>(pos.epoch));
      const double lr_epoch = lr_at(pos.epoch, tc);
      for (std::size_t i = 0, b = 0; i < order.size(); i += bs, ++b) {
        std::vector<const SamplePair*> samples;
        for (std::size_t j = i; j < std::min(i + bs, order.size()); ++j) {
          const SamplePair& s = data_.train[order[j]];
          samples.push_back(&s);
          log_.record(Split::Train, s.id);
        }
        const double lr = tc.decay_unit == DecayUnit::Epoch ? lr_epoch : lr_at(pos.step, tc);
        const std::uint64_t noise = derive_seed(derive_seed(sseed, static_cast<std::uint64_t>(pos.epoch)), b);
        StepResult sr;
        try {
          sr = train_step(*gen_, *disc_, opt_g_, opt_d_, make_batch(samples), cfg_.losses, lr, noise);
        } catch (TrainingDivergence& e) {
          e.set_recent({recent.begin(), recent.end()});
          throw;
        }
        ++pos.step;
        recent.push_back(sr.generator);
        if (recent.size() > 10) recent.pop_front();
        LossRow row{pos.step, sr.generator, sr.discriminator, k, pos.epoch};
        if (files) loss_csv << format_loss_row(row) << '\n';
        result.losses.push_back(row);
        if (opts.on_step) opts.on_step(row);
      }
      if (tc.val_every > 0 && (pos.epoch + 1) % tc.val_every == 0) {
        const double v = validation_loss();
        if (files) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.9g", v);
          val_csv << k << ',' << pos.epoch << ',' << buf << '\n';
        }
      }
      ++epochs_run;
      if (files) {
        loss_csv.flush();
        val_csv.flush();
        Position next = pos;
        ++next.epoch;
        if (next.epoch >= budget[pos.stage_index]) {
          ++next.stage_index;
          next.epoch = 0;
        }
        result.latest_checkpoint = (root / "checkpoints" / "latest.ckpt").string();
        write_checkpoint(result.latest_checkpoint, next);
      }
    }
    if (files) {
      Position next{pos.stage_index + 1, 0, pos.step};
      const std::string path = (root / "checkpoints" / ("stage" + std::to_string(k) + ".ckpt")).string();
      write_checkpoint(path, next);
      result.stage_checkpoints.push_back(path);
      if (result.latest_checkpoint.empty()) {
        result.latest_checkpoint = (root / "checkpoints" / "latest.ckpt").string();
        write_checkpoint(result.latest_checkpoint, next);
      }
    }
  }
  result.finished = true;
  return result;
}

}  // namespace fh
