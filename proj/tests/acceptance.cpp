#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fh/codec.hpp"
#include "fh/data.hpp"
#include "fh/errors.hpp"
#include "fh/generator.hpp"
#include "fh/losses.hpp"
#include "fh/metrics.hpp"
#include "fh/trainer.hpp"
#include "gradcheck.hpp"

#ifndef FH_CLI_PATH
#define FH_CLI_PATH "fundus-height"
#endif

namespace fs = std::filesystem;
namespace ag = fh::ag;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fh_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fh::RgbImage random_image(int h, int w, fh::Rng& rng) {
  fh::RgbImage img(h, w);
  for (auto& v : img.pixels) v = rng.uniform(0.0, 1.0);
  return img;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// 1 ----------------------------------------------------------------------------------

Outcome gradient_correctness() {
  fh::GeneratorConfig gc;
  gc.num_unets = 2;
  gc.unet_depth = 2;
  gc.base_channels = 2;
  gc.image_size = 8;
  fh::DiscriminatorConfig dc;
  dc.base_channels = 2;
  dc.max_channels = 8;
  dc.image_size = 8;
  fh::Generator<double> gen(gc, 3);
  fh::Discriminator<double> disc(dc, 4);
  fh::Rng rng(5);
  const auto x = ag::constant(fh::testing::random_tensor({4, 3, 8, 8}, rng, 0, 1));
  const auto y = ag::constant(fh::testing::random_tensor({4, 3, 8, 8}, rng, 0, 1));
  const fh::LossWeights w;

  auto generator_terms = [&] {
    auto y_hat = gen.forward(x, fh::Mode::Train, 11).final;
    fh::FeatureTaps<double> real;
    {
      ag::NoGradGuard guard;
      real = disc.forward(x, y, fh::Mode::Train).taps;
    }
    auto d_fake = disc.forward(x, y_hat, fh::Mode::Train);
    const fh::LossParts<double> parts{fh::lsgan_g_loss(d_fake.probability), fh::pixel_loss(y_hat, y, fh::PixelNorm::L2),
                                      fh::perceptual_loss(real, d_fake.taps, w.lambda_per_tap)};
    return std::vector<ag::Var<double>>{parts.adversarial, parts.pixel, fh::pixel_loss(y_hat, y, fh::PixelNorm::L1),
                                        parts.perceptual, fh::generator_total(parts, w).total};
  };
  auto discriminator_terms = [&] {
    ag::Var<double> f;
    {
      ag::NoGradGuard guard;
      f = gen.forward(x, fh::Mode::Train, 11).final;
    }
    auto real = disc.forward(x, y, fh::Mode::Train);
    auto d_fake = disc.forward(x, f, fh::Mode::Train);
    auto lsgan = fh::lsgan_d_loss(real.probability, d_fake.probability);
    auto per = fh::perceptual_loss(real.taps, d_fake.taps, w.lambda_per_tap);
    return std::vector<ag::Var<double>>{lsgan,
                                        fh::discriminator_total(lsgan, per, w.d_perceptual_weight, w.d_perceptual_sign)};
  };

  const auto g = fh::testing::check_gradients_multi(gen.store().parameters(), generator_terms);
  const auto d = fh::testing::check_gradients_multi(disc.store().parameters(), discriminator_terms);
  const std::vector<std::pair<const char*, fh::testing::GradCheckResult>> results{
      {"lsgan_g", g[0]},    {"pixel_l2", g[1]}, {"pixel_l1", g[2]},           {"perceptual", g[3]},
      {"generator_total", g[4]}, {"lsgan_d", d[0]}, {"discriminator_total", d[1]}};
  double worst = 0;
  std::string worst_at;
  for (const auto& [name, r] : results)
    if (r.worst >= worst) {
      worst = r.worst;
      worst_at = std::string(name) + "/" + r.worst_name;
    }
  return {worst < 1e-4, "worst relative error " + fmt("%.3g", worst) + " at " + worst_at + " over 7 terms"};
}

// 2 ----------------------------------------------------------------------------------

Outcome loss_value_oracles() {
  auto scalar = [](double v) { return ag::constant(fh::Tensor<double>(fh::Shape{}, v)); };
  const fh::Shape s{2, 3, 4, 4};
  auto filled = [](fh::Shape sh, double v) { return ag::constant(fh::Tensor<double>(sh, v)); };
  fh::FeatureTaps<double> a, b;
  const fh::Shape tap{1, 2, 2, 2};
  a.features.push_back(filled(tap, 0.0));
  b.features.push_back(filled(tap, 0.5));
  a.dims = b.dims = {{2, 2, 2}};

  const double got[] = {
      fh::lsgan_d_loss(scalar(0.5), scalar(0.5)).item(),
      fh::lsgan_g_loss(scalar(0.0)).item(),
      fh::pixel_loss(filled(s, 0.4), filled(s, 0.3), fh::PixelNorm::L2).item(),
      fh::perceptual_loss(a, b, {2.0}).item(),
      fh::generator_total<double>({scalar(1), scalar(1), scalar(1)}, fh::LossWeights{}).breakdown.total,
  };
  const double want[] = {0.25, 0.5, 0.01, 1.0, 151.0};
  double worst = 0;
  for (int i = 0; i < 5; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  return {worst <= 1e-6, "max deviation " + fmt("%.3g", worst) + " over 5 oracles"};
}

// 3 ----------------------------------------------------------------------------------

Outcome deep_supervision_identity() {
  double worst = 0;
  fh::Rng rng(7);
  for (int k : {1, 2, 3, 5}) {
    fh::GeneratorConfig gc;
    gc.num_unets = k;
    gc.unet_depth = 2;
    gc.base_channels = 4;
    gc.image_size = 16;
    fh::Generator<float> gen(gc, 100 + k);
    fh::Tensor<float> x({2, 3, 16, 16});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform(0, 1));
    for (auto mode : {fh::Mode::Eval, fh::Mode::Train}) {
      ag::NoGradGuard guard;
      const auto out = gen.forward(x, mode, 17);
      const auto& fin = out.final.value();
      for (std::size_t i = 0; i < fin.size(); ++i) {
        double mean = 0;
        for (const auto& h : out.heads) mean += h.value()[i];
        worst = std::max(worst, std::abs(fin[i] - mean / k));
      }
    }
  }
  return {worst <= 1e-6, "max |final - mean(heads)| " + fmt("%.3g", worst) + " for K in {1,2,3,5}"};
}

// 4 ----------------------------------------------------------------------------------

Outcome progressive_growth() {
  fh::GeneratorConfig gc;
  gc.num_unets = 1;
  gc.unet_depth = 2;
  gc.base_channels = 4;
  gc.image_size = 16;
  fh::Generator<float> gen(gc, 21);
  fh::Rng rng(8);
  fh::Tensor<float> probe({3, 3, 16, 16});
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = static_cast<float>(rng.uniform(0, 1));
  std::size_t compared = 0, differing = 0;
  for (int k = 1; k < 5; ++k) {
    ag::NoGradGuard guard;
    const auto before = gen.forward(probe, fh::Mode::Eval);
    auto grown = fh::grow_stack(gen, gen.store().state());
    const auto after = grown.forward(probe, fh::Mode::Eval);
    if (after.heads.size() != static_cast<std::size_t>(k + 1)) return {false, "grown stack has wrong head count"};
    for (int h = 0; h < k; ++h) {
      const auto& p = before.heads[h].value();
      const auto& q = after.heads[h].value();
      for (std::size_t i = 0; i < p.size(); ++i, ++compared)
        if (std::memcmp(&p[i], &q[i], sizeof(float)) != 0) ++differing;
    }
    gen = std::move(grown);
  }
  return {differing == 0 && compared > 0,
          std::to_string(differing) + " of " + std::to_string(compared) + " head values differ bitwise over 1->5"};
}

// 5 ----------------------------------------------------------------------------------

Outcome overfit_sanity() {
  fh::RunConfig cfg = fh::RunConfig::desk();
  cfg.generator.num_unets = 1;
  cfg.generator.base_channels = 12;
  cfg.generator.unet_depth = 3;
  cfg.train.stages = {1};
  cfg.train.batch_size = 8;
  cfg.train.epochs = 2000;
  cfg.train.val_every = 0;
  cfg.train.decay_unit = fh::DecayUnit::Step;
  cfg.train.decay_period = 150;
  fh::SynthConfig sc;
  sc.height = sc.width = 64;
  auto pairs = fh::synth_generate(8, 1, sc);
  for (auto& p : pairs) p.fundus = fh::normalize(p.fundus);
  fh::Partition part;
  part.train = pairs;

  const auto t0 = std::chrono::steady_clock::now();
  fh::Trainer trainer(cfg, part);
  const auto res = trainer.fit({});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto predict = fh::generator_predictor(trainer.generator());
  double pix = 0, ssim = 0;
  for (const auto& p : pairs) {
    const auto y = predict(p);
    pix += fh::mse(y, p.target.rgb) / pairs.size();
    ssim += fh::ssim(y, p.target.rgb) / pairs.size();
  }
  return {res.losses.size() == 2000 && pix < 0.01 && ssim > 0.95 && secs < 600,
          std::to_string(res.losses.size()) + " generator steps, pixel L2 " + fmt("%.5f", pix) + ", SSIM " +
              fmt("%.4f", ssim) + ", " + fmt("%.0f", secs) + " s"};
}

// 6 ----------------------------------------------------------------------------------

Outcome codec_roundtrip() {
  const fh::ColorMap cmap;
  const double bound = 500.0 / 255.0;
  fh::Rng rng(9);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    fh::HeightField f(8, 8);
    for (auto& v : f.values) v = rng.uniform(0, 500);
    const auto back = fh::decode_height(fh::encode_height(f, cmap), cmap);
    for (std::size_t i = 0; i < f.values.size(); ++i) worst = std::max(worst, std::abs(back.values[i] - f.values[i]));
  }
  bool exact = true;
  for (const auto& s : cmap.stops()) {
    const double h = cmap.height_min() + s.fraction * (cmap.height_max() - cmap.height_min());
    exact = exact && fh::decode_height(fh::encode_height(fh::HeightField(1, 1, h), cmap), cmap).at(0, 0) == h;
  }
  return {worst <= bound && exact, "max error " + fmt("%.4f", worst) + " um over 1000 fields, control points " +
                                       (exact ? "exact" : "NOT exact")};
}

// 7 ----------------------------------------------------------------------------------

// Every window position evaluated directly with a 2-D Gaussian built from scratch.
double naive_ssim(const fh::RgbImage& a, const fh::RgbImage& b) {
  const int n = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double weights[11][11], wsum = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      weights[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2 * sigma * sigma));
      wsum += weights[i][j];
    }
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    double sum = 0;
    int count = 0;
    for (int r = 0; r + n <= a.height; ++r)
      for (int c = 0; c + n <= a.width; ++c) {
        double mx = 0, my = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            mx += weights[i][j] / wsum * a.at(r + i, c + j, ch);
            my += weights[i][j] / wsum * b.at(r + i, c + j, ch);
          }
        double vx = 0, vy = 0, cov = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double wt = weights[i][j] / wsum;
            const double dx = a.at(r + i, c + j, ch) - mx, dy = b.at(r + i, c + j, ch) - my;
            vx += wt * dx * dx;
            vy += wt * dy * dy;
            cov += wt * dx * dy;
          }
        sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    total += sum / count;
  }
  return total / 3;
}

Outcome ssim_oracle() {
  fh::Rng rng(10);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const auto a = random_image(32, 32, rng);
    auto b = random_image(32, 32, rng);
    // Half the pairs are correlated so the structure term is exercised away from zero.
    if (t % 2)
      for (std::size_t i = 0; i < b.pixels.size(); ++i)
        b.pixels[i] = std::clamp(a.pixels[i] + 0.2 * (b.pixels[i] - 0.5), 0.0, 1.0);
    worst = std::max(worst, std::abs(fh::ssim(a, b) - naive_ssim(a, b)));
  }
  return {worst < 1e-6, "max |delta| " + fmt("%.3g", worst) + " over 50 pairs at 32x32"};
}

// 8 ----------------------------------------------------------------------------------

Outcome lpips_identity_symmetry() {
  const fs::path dir = scratch("lpips");
  fh::DiscriminatorConfig dc;
  dc.image_size = 32;
  dc.base_channels = 4;
  dc.max_channels = 16;
  fh::Discriminator<float> d(dc, 99);
  fh::TensorMap<float> tensors;
  for (const auto& [k, v] : d.store().state()) tensors.emplace("discriminator." + k, v);
  nlohmann::json side;
  side["discriminator"] = dc;
  side["discriminator_seed"] = 99;
  const std::string ckpt = (dir / "d.ckpt").string();
  fh::save_checkpoint(ckpt, tensors, side);
  auto model = fh::LpipsModel::load(ckpt);

  fh::Rng rng(11);
  double identity = 0, asym = 0, recompute = 0;
  auto tensor = [](const fh::RgbImage& img) {
    return ag::constant(fh::to_tensor<float>(std::vector<fh::RgbImage>{img}));
  };
  for (int t = 0; t < 10; ++t) {
    const auto x = random_image(32, 32, rng), a = random_image(32, 32, rng), b = random_image(32, 32, rng);
    identity = std::max(identity, std::abs(model.distance(a, a, x)));
    const double ab = model.distance(a, b, x);
    asym = std::max(asym, std::abs(ab - model.distance(b, a, x)));
    ag::NoGradGuard guard;
    const auto ta = d.forward(tensor(x), tensor(a), fh::Mode::Eval).taps;
    const auto tb = d.forward(tensor(x), tensor(b), fh::Mode::Eval).taps;
    double expected = 0;
    for (std::size_t l = 0; l < ta.size(); ++l) {
      const auto fa = ta.features[l].value().vec(), fb = tb.features[l].value().vec();
      double sq = 0;
      for (std::size_t i = 0; i < fa.size(); ++i) sq += std::pow(static_cast<double>(fa[i]) - fb[i], 2);
      expected += sq / (static_cast<double>(ta.dims[l].width) * ta.dims[l].height * ta.dims[l].depth);
    }
    recompute = std::max(recompute, std::abs(ab - expected));
  }
  fs::remove_all(dir);
  return {identity == 0 && asym < 1e-7 && recompute < 1e-6,
          "identity " + fmt("%.3g", identity) + ", asymmetry " + fmt("%.3g", asym) + ", tap-level deviation " +
              fmt("%.3g", recompute)};
}

// 9 ----------------------------------------------------------------------------------

Outcome augmentation_arithmetic() {
  fh::Rng rng(12);
  std::vector<fh::SamplePair> small;
  bool involution = true, counts = true;
  for (int i = 0; i < 6; ++i) {
    fh::SamplePair p;
    p.id = p.source_id = "s" + std::to_string(i);
    p.fundus.pixels = random_image(5, 7, rng);
    p.target.rgb = random_image(5, 7, rng);
    small.push_back(p);
  }
  const auto aug = fh::augment_all(small);
  counts = aug.size() == 4 * small.size();
  // Applying a flip to its own output restores the source pixelwise.
  for (const auto& src : small) {
    const auto once = fh::augment_flips(src);
    for (std::size_t v = 1; v < once.size(); ++v) {
      auto plain = once[v];
      plain.augmentation = fh::AugmentationTag::None;
      plain.source_id = plain.id;
      const auto again = fh::augment_flips(plain);
      involution = involution && again[v].fundus.pixels == src.fundus.pixels && again[v].target.rgb == src.target.rgb;
    }
  }

  const fs::path dir = scratch("manifest");
  std::vector<fh::SamplePair> mock;
  for (int i = 0; i < 3407; ++i) {
    fh::SamplePair p;
    p.id = p.source_id = "eye" + std::to_string(i);
    p.fundus.pixels = fh::RgbImage(2, 2, (i % 255) / 255.0);
    p.target.rgb = fh::RgbImage(2, 2, 0.5);
    mock.push_back(p);
  }
  fh::write_corpus(dir.string(), mock);
  fh::IngestConfig ingest;
  ingest.size = 2;
  ingest.apply_clahe = false;
  const auto loaded = fh::load_corpus(dir.string(), ingest);
  const auto full = fh::augment_all(loaded);
  std::set<std::string> ids;
  for (const auto& p : full) ids.insert(p.id);
  fs::remove_all(dir);
  const bool paper_count = loaded.size() == 3407 && full.size() == 13628 && ids.size() == 13628;
  return {counts && involution && paper_count,
          std::to_string(small.size()) + " -> " + std::to_string(aug.size()) + ", involution " +
              (involution ? "holds" : "FAILS") + ", manifest " + std::to_string(loaded.size()) + " -> " +
              std::to_string(full.size()) + " unique samples"};
}

// 10 ---------------------------------------------------------------------------------

Outcome lr_schedule() {
  const fh::TrainConfig cfg;
  const std::pair<long, double> cases[] = {
      {0, 1e-3}, {30, 9e-4}, {65, 8.1e-4}, {249, 1e-3 * std::pow(0.9, 8)}};
  double worst = 0;
  for (const auto& [t, want] : cases) worst = std::max(worst, std::abs(fh::lr_at(t, cfg) - want) / want);
  return {worst < 1e-12, "max relative deviation " + fmt("%.3g", worst) + " at t in {0, 30, 65, 249}"};
}

// 11 ---------------------------------------------------------------------------------

fh::RunConfig desk_run_config(const fs::path& out) {
  fh::RunConfig cfg = fh::RunConfig::desk();
  cfg.out_dir = out.string();
  cfg.seed = 2024;
  return cfg;
}

std::vector<fh::SamplePair> desk_corpus() {
  fh::SynthConfig sc;
  sc.height = sc.width = 64;
  auto pairs = fh::synth_generate(10, 77, sc);
  for (auto& p : pairs) p.fundus = fh::normalize(p.fundus);
  return pairs;
}

Outcome determinism() {
  const auto corpus = desk_corpus();
  std::vector<std::string> csv, digests;
  std::size_t steps = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = scratch("determinism_" + std::to_string(run));
    const auto cfg = desk_run_config(dir);
    fh::Trainer trainer(cfg, fh::prepare_partition(corpus, cfg));
    const auto res = trainer.fit({dir.string()});
    if (!res.finished) return {false, "run " + std::to_string(run) + " did not finish"};
    steps = res.losses.size();
    csv.push_back(read_file(dir / "logs" / "loss.csv") + read_file(dir / "logs" / "val.csv"));
    std::string d;
    for (const auto& ck : res.stage_checkpoints) d += fh::checkpoint_digest(ck);
    d += fh::checkpoint_digest(res.latest_checkpoint);
    digests.push_back(d);
    fs::remove_all(dir);
  }
  const bool same_csv = csv[0] == csv[1] && !csv[0].empty();
  const bool same_ckpt = digests[0] == digests[1];
  return {same_csv && same_ckpt, std::to_string(steps) + " steps over stages 1,2,3; loss CSVs " +
                                     (same_csv ? "identical" : "DIFFER") + ", checkpoint digests " +
                                     (same_ckpt ? "identical" : "DIFFER")};
}

// 12 ---------------------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream f(p);
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Outcome ablation_harness() {
  const fs::path dir = scratch("ablation");
  const std::string cli = FH_CLI_PATH;
  const std::string corpus = (dir / "corpus").string(), out = (dir / "run").string();
  const std::string log = (dir / "cli.log").string();
  if (std::system((cli + " synth --scale desk --n 10 --size 64 --seed 5 --out " + corpus + " >" + log + " 2>&1")
                      .c_str()) != 0)
    return {false, "synth failed, see " + log};
  const int rc = std::system((cli + " ablate --scale desk --seed 5 --data " + corpus + " --out " + out +
                              " --sweep supervision --sweep pixel_norm --dump-heads 2 >>" + log + " 2>&1")
                                 .c_str());
  if (rc != 0) return {false, "ablate exited with " + std::to_string(rc) + ", see " + log};

  const std::vector<std::string> header{"Method", "SSIM", "LPIPS", "MSE", "PSNR"};
  const std::pair<const char*, std::vector<std::pair<std::string, std::string>>> sweeps[] = {
      {"supervision", {{"w supervision", "with_supervision"}, {"w/o supervision", "without_supervision"}}},
      {"pixel_norm", {{"L1-Loss", "l1"}, {"L2-Loss", "l2"}}}};
  int dumps = 0;
  for (const auto& [sweep, points] : sweeps) {
    const auto rows = read_csv(fs::path(out) / "reports" / ("ablation_" + std::string(sweep) + ".csv"));
    if (rows.size() != 1 + points.size()) return {false, std::string(sweep) + ": wrong row count"};
    if (!std::equal(header.begin(), header.end(), rows[0].begin()))
      return {false, std::string(sweep) + ": header is not Method,SSIM,LPIPS,MSE,PSNR"};
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& r = rows[i + 1];
      if (r.size() < 8 || r[0] != points[i].first || r.back() != "ok")
        return {false, std::string(sweep) + ": row " + std::to_string(i + 1) + " malformed or failed"};
      for (int c = 1; c <= 4; ++c)
        if (!std::isfinite(std::strtod(r[c].c_str(), nullptr)))
          return {false, std::string(sweep) + ": non-finite metric in row " + std::to_string(i + 1)};
      const fs::path heads = fs::path(out) / "figures" / "heads" / (std::string(sweep) + "_" + points[i].second);
      if (!fs::is_directory(heads) || fs::is_empty(heads))
        return {false, "no per-head dumps in " + heads.string()};
      for (const auto& e : fs::directory_iterator(heads)) {
        const auto img = fh::read_png(e.path().string());
        // fundus, three heads, final and target
        if (img.width < 6 * 64) return {false, "head dump too narrow: " + e.path().string()};
        ++dumps;
      }
    }
    for (const char* m : {"ssim", "lpips", "mse", "psnr"})
      if (!fs::exists(fs::path(out) / "figures" / ("ablation_" + std::string(sweep) + "_" + m + ".png")))
        return {false, std::string(sweep) + ": missing " + m + " bar chart"};
  }
  fs::remove_all(dir);
  return {true, "2 sweeps x 2 points completed; tables in Method,SSIM,LPIPS,MSE,PSNR layout; " +
                    std::to_string(dumps) + " per-head dumps; 8 bar charts"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient correctness", gradient_correctness},
      {"loss value oracles", loss_value_oracles},
      {"deep-supervision identity", deep_supervision_identity},
      {"progressive growth", progressive_growth},
      {"overfit sanity", overfit_sanity},
      {"codec roundtrip", codec_roundtrip},
      {"SSIM oracle equivalence", ssim_oracle},
      {"LPIPS identity and symmetry", lpips_identity_symmetry},
      {"augmentation arithmetic", augmentation_arithmetic},
      {"LR schedule", lr_schedule},
      {"determinism", determinism},
      {"ablation harness", ablation_harness},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (id == 1 && secs >= 60) {
      o.pass = false;
      o.detail += " (over the 60 s budget)";
    }
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
