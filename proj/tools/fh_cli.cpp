#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "fh/codec.hpp"
#include "fh/config.hpp"
#include "fh/data.hpp"
#include "fh/errors.hpp"
#include "fh/figures.hpp"
#include "fh/metrics.hpp"
#include "fh/tensor.hpp"
#include "fh/trainer.hpp"

#ifndef FH_GIT_HASH
#define FH_GIT_HASH "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string ckpt;
  std::optional<bool> deterministic;
  std::string scale = "desk";
  std::string data;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run config JSON; missing keys keep the --scale preset");
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output directory (checkpoints/, reports/, figures/, logs/)");
  cmd->add_option("--ckpt", c.ckpt, "Checkpoint to load");
  cmd->add_option("--deterministic", c.deterministic, "Fixed-order kernels (always on; recorded in the manifest)");
  cmd->add_option("--scale", c.scale, "Preset the config starts from")->check(CLI::IsMember({"desk", "full"}));
  cmd->add_option("--data", c.data, "Corpus root (manifest.csv, fundus/, heightmap/)");
}

fh::RunConfig resolve_config(const Common& c) {
  fh::RunConfig cfg = c.scale == "full" ? fh::RunConfig::full() : fh::RunConfig::desk();
  if (!c.config.empty()) cfg = fh::load_run_config(c.config, cfg);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (!c.data.empty()) cfg.data_root = c.data;
  if (c.deterministic) cfg.deterministic = *c.deterministic;
  cfg.validate();
  return cfg;
}

fs::path make_tree(const std::string& out) {
  const fs::path root(out);
  for (const char* d : {"checkpoints", "reports", "figures", "logs"}) fs::create_directories(root / d);
  return root;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw fh::DataError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void write_manifest(const fs::path& root, const std::string& command, const fh::RunConfig& cfg, json extra = {}) {
  json m = {{"command", command},
            {"git", FH_GIT_HASH},
            {"seed", cfg.seed},
            {"config_digest", cfg.digest()},
            {"deterministic", cfg.deterministic}};
  if (extra.is_object()) m.update(extra);
  write_json(root / "logs" / ("run_manifest_" + command + ".json"), m);
  if (command == "train") write_json(root / "run_manifest.json", m);
}

fh::ColorMap colormap_of(const fh::RunConfig& cfg) {
  return cfg.colormap.empty() ? fh::ColorMap{} : fh::ColorMap::load(cfg.colormap);
}

bool is_prepared(const std::string& root) { return fs::exists(fs::path(root) / "logs" / "prep.json"); }

std::vector<fh::SamplePair> load_pairs(const fh::RunConfig& cfg) {
  if (cfg.data_root.empty()) throw UsageError("no corpus given (--data or data_root in the config)");
  if (cfg.data_prepared || is_prepared(cfg.data_root)) {
    auto pairs = fh::load_prepared(cfg.data_root);
    for (const auto& p : pairs)
      if (p.fundus.pixels.height != cfg.ingest.size || p.fundus.pixels.width != cfg.ingest.size)
        throw fh::DataError(cfg.data_root + ": prepared sample " + p.id + " is " +
                            std::to_string(p.fundus.pixels.height) + "x" + std::to_string(p.fundus.pixels.width) +
                            ", the config expects " + std::to_string(cfg.ingest.size));
    return pairs;
  }
  return fh::load_corpus(cfg.data_root, cfg.ingest);
}

const std::vector<fh::SamplePair>& split_of(const fh::Partition& p, const std::string& name) {
  if (name == "train") return p.train;
  if (name == "val") return p.val;
  if (name == "test") return p.test;
  throw UsageError("unknown split " + name);
}

// Digest over the manifest and every file it names.
std::string corpus_digest(const std::string& root) {
  const auto rows = fh::read_manifest(root);
  std::string acc = fh::file_digest((fs::path(root) / "manifest.csv").string());
  for (const auto& r : rows) {
    acc += fh::file_digest((fs::path(root) / r.fundus_path).string());
    acc += fh::file_digest((fs::path(root) / r.heightmap_path).string());
  }
  return fh::bytes_digest(acc);
}

// --- prep ---------------------------------------------------------------------------

struct PrepArgs {
  std::string in;
  std::optional<int> size;
  bool no_clahe = false;
  std::optional<double> clip_limit;
  std::optional<int> tiles;
};

int cmd_prep(const Common& c, const PrepArgs& a) {
  fh::RunConfig cfg = resolve_config(c);
  if (c.out.empty()) throw UsageError("prep needs --out");
  if (fs::weakly_canonical(a.in) == fs::weakly_canonical(c.out)) throw UsageError("prep: --in and --out must differ");
  if (a.size) cfg.ingest.size = *a.size;
  if (a.no_clahe) cfg.ingest.apply_clahe = false;
  if (a.clip_limit) cfg.ingest.clahe.clip_limit = *a.clip_limit;
  if (a.tiles) cfg.ingest.clahe.tiles_x = cfg.ingest.clahe.tiles_y = *a.tiles;

  json ingest = {{"size", cfg.ingest.size},
                 {"apply_clahe", cfg.ingest.apply_clahe},
                 {"clip_limit", cfg.ingest.clahe.clip_limit},
                 {"tiles_x", cfg.ingest.clahe.tiles_x},
                 {"tiles_y", cfg.ingest.clahe.tiles_y},
                 {"luminance_only", cfg.ingest.clahe.luminance_only}};
  const std::string input_digest = corpus_digest(a.in);
  const fs::path stamp = fs::path(c.out) / "logs" / "prep.json";
  if (fs::exists(stamp)) {
    std::ifstream f(stamp);
    const json old = json::parse(f, nullptr, false);
    if (!old.is_discarded() && old.value("input_digest", "") == input_digest && old.value("ingest", json{}) == ingest &&
        fs::exists(fs::path(c.out) / "manifest.csv") && old.value("output_digest", "") == corpus_digest(c.out)) {
      std::cout << "prep: " << c.out << " is up to date\n";
      return kOk;
    }
  }
  const auto pairs = fh::load_corpus(a.in, cfg.ingest);
  make_tree(c.out);
  fh::write_corpus(c.out, pairs);
  write_json(stamp, {{"input", fs::absolute(a.in).string()},
                     {"input_digest", input_digest},
                     {"ingest", ingest},
                     {"count", pairs.size()},
                     {"output_digest", corpus_digest(c.out)}});
  std::cout << "prep: wrote " << pairs.size() << " pairs to " << c.out << "\n";
  return kOk;
}

// --- synth --------------------------------------------------------------------------

int cmd_synth(const Common& c, int n, std::optional<int> size) {
  if (n <= 0) throw UsageError("synth: --n must be positive");
  fh::RunConfig cfg = resolve_config(c);
  if (c.out.empty()) throw UsageError("synth needs --out");
  fh::SynthConfig sc;
  sc.height = sc.width = size.value_or(cfg.ingest.size);
  const auto pairs = fh::synth_generate(n, cfg.seed, sc, colormap_of(cfg));
  make_tree(c.out);
  fh::write_corpus(c.out, pairs);
  const std::string digest = corpus_digest(c.out);
  write_manifest(c.out, "synth", cfg, {{"n", n}, {"size", sc.height}, {"corpus_digest", digest}});
  std::cout << "synth: " << n << " pairs, corpus digest " << digest << "\n";
  return kOk;
}

// --- train --------------------------------------------------------------------------

json split_ids(const fh::Partition& p) {
  auto ids = [](const std::vector<fh::SamplePair>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.id);
    return out;
  };
  return {{"train", ids(p.train)}, {"val", ids(p.val)}, {"test", ids(p.test)}};
}

int cmd_train(const Common& c, std::optional<int> max_epochs) {
  const fh::RunConfig cfg = resolve_config(c);
  const fs::path root = make_tree(cfg.out_dir);
  const auto partition = fh::prepare_partition(load_pairs(cfg), cfg);
  fh::save_run_config((root / "config.json").string(), cfg);
  write_json(root / "logs" / "splits.json", split_ids(partition));
  write_manifest(root, "train", cfg, {{"data_root", cfg.data_root}, {"train_pairs", partition.train.size()}});

  fh::Trainer trainer(cfg, partition);
  fh::FitOptions opts;
  opts.out_dir = root.string();
  opts.max_epochs = max_epochs;
  opts.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };
  std::pair<int, int> last_logged{-1, -1};
  opts.on_step = [&](const fh::LossRow& r) {
    if (std::pair{r.stage, r.epoch} != last_logged) {
      last_logged = {r.stage, r.epoch};
      std::printf("stage %d epoch %d step %ld  total %.5g  pix %.5g  d %.5g\n", r.stage, r.epoch, r.step, r.g.total,
                  r.g.pixel, r.d_loss);
      std::fflush(stdout);
    }
  };
  const auto res = c.ckpt.empty() ? trainer.fit(opts) : trainer.resume(c.ckpt, opts);
  for (const auto& ck : res.stage_checkpoints) std::cout << "checkpoint " << ck << "\n";
  std::cout << (res.finished ? "train: finished\n" : "train: stopped early; resume with --ckpt " + res.latest_checkpoint + "\n");
  return kOk;
}

// --- eval ---------------------------------------------------------------------------

fh::RgbImage clamp01(fh::RgbImage img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// Fundus, every head, the final output and the target side by side.
void dump_heads(fh::Generator<float>& gen, const std::vector<fh::SamplePair>& samples, const fs::path& dir,
                std::size_t limit) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size() && i < limit; ++i) {
    const auto& s = samples[i];
    fh::ag::NoGradGuard no_grad;
    const auto out = gen.forward(fh::to_tensor<float>(std::vector<fh::RgbImage>{s.fundus.pixels}), fh::Mode::Eval);
    std::vector<fh::RgbImage> row{s.fundus.pixels};
    std::vector<std::string> titles{"fundus"};
    for (std::size_t h = 0; h < out.heads.size(); ++h) {
      row.push_back(clamp01(fh::from_tensor<float>(out.heads[h].value(), 0)));
      titles.push_back("head " + std::to_string(h + 1));
    }
    row.push_back(clamp01(fh::from_tensor<float>(out.final.value(), 0)));
    titles.push_back("final");
    row.push_back(s.target.rgb);
    titles.push_back("target");
    fh::write_png((dir / (s.id + ".png")).string(), fh::labelled_grid({row}, titles, {}));
  }
}

std::string lpips_path(const std::string& flag, const fh::RunConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.lpips_checkpoint.empty()) return cfg.lpips_checkpoint;
  throw UsageError("eval: no frozen discriminator for LPIPS (--lpips or lpips_checkpoint in the config)");
}

int cmd_eval(const Common& c, const std::string& lpips_flag, const std::string& split, std::size_t dumps) {
  const fh::RunConfig cfg = resolve_config(c);
  if (c.ckpt.empty()) throw UsageError("eval needs --ckpt");
  const fs::path root = make_tree(cfg.out_dir);
  auto gen = fh::load_generator(c.ckpt);
  auto lpips = fh::LpipsModel::load(lpips_path(lpips_flag, cfg));
  const auto partition = fh::prepare_partition(load_pairs(cfg), cfg);
  const auto& samples = split_of(partition, split);
  auto report = fh::evaluate(samples, fh::generator_predictor(gen), lpips, colormap_of(cfg));
  report.provenance["generator_checkpoint_digest"] = fh::checkpoint_digest(c.ckpt);
  report.provenance["config_digest"] = cfg.digest();
  report.provenance["seed"] = cfg.seed;
  report.provenance["split"] = split;
  report.provenance["heads"] = gen.config().num_unets;
  fh::write_report((root / "reports" / ("eval_" + split)).string(), report);
  dump_heads(gen, samples, root / "figures" / "heads", dumps);
  write_manifest(root, "eval", cfg, {{"checkpoint", c.ckpt}});
  std::printf("eval (%s, n=%ld): SSIM %.4f  LPIPS %.5f  MSE %.5f  PSNR %.2f dB  MAE %.2f um\n", split.c_str(),
              report.n_samples, report.ssim, report.lpips, report.mse, report.psnr_db, report.mae_um);
  return kOk;
}

// --- infer --------------------------------------------------------------------------

int cmd_infer(const Common& c, const std::vector<std::string>& inputs) {
  const fh::RunConfig cfg = resolve_config(c);
  if (c.ckpt.empty()) throw UsageError("infer needs --ckpt");
  if (inputs.empty()) throw UsageError("infer needs at least one fundus image");
  const fs::path root = make_tree(cfg.out_dir);
  const fs::path dir = root / "infer";
  fs::create_directories(dir);
  auto gen = fh::load_generator(c.ckpt);
  const int size = gen.config().image_size;
  const auto cmap = colormap_of(cfg);
  std::vector<std::vector<fh::RgbImage>> grid;
  std::vector<std::string> labels;
  for (const auto& path : inputs) {
    fh::FundusImage raw{fh::resize_bilinear(fh::read_png(path), size, size)};
    if (cfg.ingest.apply_clahe) raw = fh::clahe(raw, cfg.ingest.clahe);
    const auto fundus = fh::normalize(raw);
    fh::ag::NoGradGuard no_grad;
    const auto out = gen.forward(fh::to_tensor<float>(std::vector<fh::RgbImage>{fundus.pixels}), fh::Mode::Eval);
    const auto pred = clamp01(fh::from_tensor<float>(out.final.value(), 0));
    const std::string stem = fs::path(path).stem().string();
    fh::write_png((dir / (stem + "_heightmap.png")).string(), pred);
    const auto heights = fh::decode_height(pred, cmap);
    std::ofstream csv(dir / (stem + "_um.csv"));
    for (int r = 0; r < heights.height; ++r) {
      for (int col = 0; col < heights.width; ++col) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%.3f", col ? "," : "", heights.at(r, col));
        csv << buf;
      }
      csv << '\n';
    }
    grid.push_back({fundus.pixels, pred});
    labels.push_back(stem);
    std::cout << path << " -> " << (dir / (stem + "_heightmap.png")).string() << "\n";
  }
  fh::write_png((root / "figures" / "infer_grid.png").string(),
                fh::labelled_grid(grid, {"fundus", "prediction"}, labels));
  write_manifest(root, "infer", cfg, {{"checkpoint", c.ckpt}, {"inputs", inputs}});
  return kOk;
}

// --- ablate -------------------------------------------------------------------------

struct SweepPoint {
  std::string name;
  std::string slug;
  fh::RunConfig cfg;
  int expected_heads = 0;
};

std::vector<SweepPoint> sweep_points(const std::string& sweep, const fh::RunConfig& base) {
  std::vector<SweepPoint> pts;
  const int k = base.train.stages.back();
  if (sweep == "supervision") {
    for (bool on : {true, false}) {
      SweepPoint p{on ? "w supervision" : "w/o supervision", on ? "with_supervision" : "without_supervision", base, k};
      p.cfg.generator.deep_supervision = on;
      pts.push_back(p);
    }
  } else if (sweep == "pixel_norm") {
    for (auto norm : {fh::PixelNorm::L1, fh::PixelNorm::L2}) {
      SweepPoint p{norm == fh::PixelNorm::L1 ? "L1-Loss" : "L2-Loss", norm == fh::PixelNorm::L1 ? "l1" : "l2", base, k};
      p.cfg.losses.pixel_norm = norm;
      pts.push_back(p);
    }
  } else if (sweep == "stack") {
    for (int depth : base.ablation.stack_depths) {
      SweepPoint p{std::to_string(depth), "stack" + std::to_string(depth), base, depth};
      p.cfg.train.stages.clear();
      for (int s = 1; s <= depth; ++s) p.cfg.train.stages.push_back(s);
      p.cfg.train.stage_epochs.clear();
      pts.push_back(p);
    }
  } else {
    throw UsageError("unknown sweep " + sweep + " (supervision, pixel_norm, stack)");
  }
  return pts;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int run_sweep(const std::string& sweep, const fh::RunConfig& base, const fs::path& root,
              const std::vector<fh::SamplePair>& corpus, std::string& lpips_ckpt, std::size_t dumps) {
  const auto points = sweep_points(sweep, base);
  const auto partition = fh::prepare_partition(corpus, base);
  struct Row {
    std::string name;
    fh::MetricReport report;
    int heads = 0;
    std::string status = "ok";
  };
  std::vector<Row> rows;
  bool any_ok = false, diverged = false;
  for (const auto& pt : points) {
    Row row{pt.name, {}, 0};
    const fs::path dir = root / "ablation" / sweep / pt.slug;
    try {
      std::cout << "ablate " << sweep << ": " << pt.name << "\n" << std::flush;
      fh::RunConfig cfg = pt.cfg;
      cfg.out_dir = dir.string();
      fh::Trainer trainer(cfg, partition);
      fh::FitOptions opts;
      opts.out_dir = dir.string();
      const auto res = trainer.fit(opts);
      const std::string final_ckpt = res.stage_checkpoints.back();
      auto gen = fh::load_generator(final_ckpt);
      row.heads = gen.config().num_unets;
      if (row.heads != pt.expected_heads)
        throw fh::ConfigError("expected " + std::to_string(pt.expected_heads) + " heads, got " +
                              std::to_string(row.heads));
      if (lpips_ckpt.empty()) {
        // The first trained discriminator becomes the fixed LPIPS network for every point.
        const fs::path pinned = root / "checkpoints" / "lpips_discriminator.ckpt";
        fs::copy_file(final_ckpt, pinned, fs::copy_options::overwrite_existing);
        fs::copy_file(final_ckpt + ".json", pinned.string() + ".json", fs::copy_options::overwrite_existing);
        lpips_ckpt = pinned.string();
      }
      auto lpips = fh::LpipsModel::load(lpips_ckpt);
      row.report = fh::evaluate(partition.test, fh::generator_predictor(gen), lpips, colormap_of(cfg));
      row.report.provenance["generator_checkpoint_digest"] = fh::checkpoint_digest(final_ckpt);
      row.report.provenance["heads"] = row.heads;
      fh::write_report((root / "reports" / ("ablation_" + sweep + "_" + pt.slug)).string(), row.report);
      dump_heads(gen, partition.test, root / "figures" / "heads" / (sweep + "_" + pt.slug), dumps);
      any_ok = true;
    } catch (const fh::TrainingDivergence& e) {
      diverged = true;
      row.status = std::string("diverged: ") + e.what();
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    if (row.status != "ok") {
      row.report.ssim = row.report.lpips = row.report.mse = row.report.psnr_db = row.report.mae_um = NAN;
      std::cerr << "ablate " << sweep << ": " << pt.name << " " << row.status << "\n";
    }
    rows.push_back(std::move(row));
  }

  std::ofstream csv(root / "reports" / ("ablation_" + sweep + ".csv"));
  csv << "Method,SSIM,LPIPS,MSE,PSNR,MAE_um,heads,status\n";
  std::ofstream md(root / "reports" / ("ablation_" + sweep + ".md"));
  md << "| Method | SSIM | LPIPS | MSE | PSNR(dB) |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    csv << r.name << ',' << fmt(r.report.ssim) << ',' << fmt(r.report.lpips) << ',' << fmt(r.report.mse) << ','
        << fmt(r.report.psnr_db) << ',' << fmt(r.report.mae_um) << ',' << r.heads << ',' << status << '\n';
    md << "| " << r.name << " | " << fmt(r.report.ssim) << " | " << fmt(r.report.lpips) << " | " << fmt(r.report.mse)
       << " | " << fmt(r.report.psnr_db) << " |\n";
  }
  std::vector<std::string> labels;
  for (const auto& r : rows) labels.push_back(r.name);
  const std::pair<const char*, double fh::MetricReport::*> metrics[] = {
      {"SSIM", &fh::MetricReport::ssim},
      {"LPIPS", &fh::MetricReport::lpips},
      {"MSE", &fh::MetricReport::mse},
      {"PSNR", &fh::MetricReport::psnr_db}};
  for (const auto& [name, member] : metrics) {
    std::vector<double> values;
    for (const auto& r : rows) values.push_back(r.report.*member);
    const std::string lower = [&] {
      std::string s = name;
      for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      return s;
    }();
    fh::write_png((root / "figures" / ("ablation_" + sweep + "_" + lower + ".png")).string(),
                  fh::bar_chart(name, labels, values));
  }
  if (any_ok) return kOk;
  return diverged ? kNumeric : kData;
}

int cmd_ablate(const Common& c, const std::vector<std::string>& sweeps, const std::string& lpips_flag,
               std::size_t dumps) {
  const fh::RunConfig cfg = resolve_config(c);
  const fs::path root = make_tree(cfg.out_dir);
  const auto corpus = load_pairs(cfg);
  std::string lpips = !lpips_flag.empty()                  ? lpips_flag
                      : !cfg.ablation.lpips_checkpoint.empty() ? cfg.ablation.lpips_checkpoint
                                                               : cfg.lpips_checkpoint;
  write_manifest(root, "ablate", cfg, {{"sweeps", sweeps}, {"data_root", cfg.data_root}});
  int worst = kOk;
  for (const auto& s : sweeps) worst = std::max(worst, run_sweep(s, cfg, root, corpus, lpips, dumps));
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fundus-to-heightmap translation with stacked U-Nets"};
  app.require_subcommand(1);
  Common common;

  PrepArgs prep;
  auto* prep_cmd = app.add_subcommand("prep", "CLAHE, resize and normalise a corpus");
  add_common(prep_cmd, common);
  prep_cmd->add_option("--in", prep.in, "Raw corpus root")->required();
  prep_cmd->add_option("--size", prep.size, "Output size in pixels");
  prep_cmd->add_flag("--no-clahe", prep.no_clahe, "Skip contrast enhancement");
  prep_cmd->add_option("--clip-limit", prep.clip_limit, "CLAHE clip limit");
  prep_cmd->add_option("--tiles", prep.tiles, "CLAHE tiles per side");

  int synth_n = 0;
  std::optional<int> synth_size;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fundus/heightmap corpus");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--n", synth_n, "Number of pairs")->required();
  synth_cmd->add_option("--size", synth_size, "Image size in pixels");

  std::optional<int> max_epochs;
  auto* train_cmd = app.add_subcommand("train", "Progressive adversarial training");
  add_common(train_cmd, common);
  train_cmd->add_option("--max-epochs", max_epochs, "Stop after this many epochs (resume later with --ckpt)");

  std::string lpips, split = "test";
  std::size_t dumps = 8;
  auto* eval_cmd = app.add_subcommand("eval", "SSIM, LPIPS, MSE, PSNR and height error on a split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--lpips", lpips, "Frozen discriminator checkpoint for LPIPS");
  eval_cmd->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--dump-heads", dumps, "Samples whose per-head outputs are written");

  std::vector<std::string> inputs;
  auto* infer_cmd = app.add_subcommand("infer", "Predict heightmaps for fundus images");
  add_common(infer_cmd, common);
  infer_cmd->add_option("inputs", inputs, "Fundus PNGs");

  std::vector<std::string> sweeps;
  auto* ablate_cmd = app.add_subcommand("ablate", "Ablation sweeps with comparison tables and figures");
  add_common(ablate_cmd, common);
  ablate_cmd->add_option("--sweep", sweeps, "supervision, pixel_norm and/or stack")->required();
  ablate_cmd->add_option("--lpips", lpips, "Frozen discriminator checkpoint (default: first trained point)");
  ablate_cmd->add_option("--dump-heads", dumps, "Test samples whose per-head outputs are written");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*prep_cmd) return cmd_prep(common, prep);
    if (*synth_cmd) return cmd_synth(common, synth_n, synth_size);
    if (*train_cmd) return cmd_train(common, max_epochs);
    if (*eval_cmd) return cmd_eval(common, lpips, split, dumps);
    if (*infer_cmd) return cmd_infer(common, inputs);
    if (*ablate_cmd) return cmd_ablate(common, sweeps, lpips, dumps);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const fh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const fh::TrainingDivergence& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
