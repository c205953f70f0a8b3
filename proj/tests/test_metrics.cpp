#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fh/errors.hpp"
#include "fh/metrics.hpp"
#include "fh/rng.hpp"
#include "fh/trainer.hpp"

namespace fs = std::filesystem;

namespace {

fh::RgbImage random_image(int h, int w, fh::Rng& rng, double lo = 0.0, double hi = 1.0) {
  fh::RgbImage img(h, w);
  for (auto& v : img.pixels) v = rng.uniform(lo, hi);
  return img;
}

// Direct evaluation at every window position with a 2-D Gaussian built from scratch.
double naive_ssim(const fh::RgbImage& a, const fh::RgbImage& b) {
  const int n = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double weights[11][11], wsum = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double di = i - 5, dj = j - 5;
      weights[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      wsum += weights[i][j];
    }
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    double chsum = 0;
    int count = 0;
    for (int r = 0; r + n <= a.height; ++r)
      for (int c = 0; c + n <= a.width; ++c) {
        double mx = 0, my = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double wt = weights[i][j] / wsum;
            mx += wt * a.at(r + i, c + j, ch);
            my += wt * b.at(r + i, c + j, ch);
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
        chsum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    total += chsum / count;
  }
  return total / 3;
}

TEST(Mse, Examples) {
  fh::RgbImage a(4, 4, 0.3), b(4, 4, 0.4), zero(4, 4, 0.0), one(4, 4, 1.0);
  EXPECT_EQ(fh::mse(a, a), 0.0);
  EXPECT_NEAR(fh::mse(a, b), 0.01, 1e-15);
  EXPECT_EQ(fh::mse(zero, one), 1.0);
  EXPECT_THROW(fh::mse(a, fh::RgbImage(4, 5)), fh::ShapeError);
}

TEST(Psnr, Examples) {
  EXPECT_NEAR(fh::psnr_from_mse(0.01), 20.0, 1e-12);
  EXPECT_EQ(fh::psnr_from_mse(1.0), 0.0);
  fh::RgbImage a(4, 4, 0.3);
  EXPECT_EQ(fh::psnr(a, a), 100.0);
  EXPECT_EQ(fh::psnr(a, a, 1.0, 60.0), 60.0);
  EXPECT_NEAR(fh::psnr(a, fh::RgbImage(4, 4, 0.4)), 20.0, 1e-9);
}

TEST(Ssim, MatchesNaiveSlidingWindow) {
  fh::Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_image(32, 32, rng), b = random_image(32, 32, rng);
    EXPECT_NEAR(fh::ssim(a, b), naive_ssim(a, b), 1e-6);
    auto c = a;
    for (auto& v : c.pixels) v = std::clamp(v + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    EXPECT_NEAR(fh::ssim(a, c), naive_ssim(a, c), 1e-6);
  }
}

TEST(Ssim, IdentityAndInversion) {
  fh::Rng rng(22);
  const auto a = random_image(20, 24, rng, 0.25, 0.75);
  EXPECT_NEAR(fh::ssim(a, a), 1.0, 1e-12);
  auto inv = a;
  for (auto& v : inv.pixels) v = 1 - v;
  EXPECT_LT(fh::ssim(a, inv), 0.5);
  EXPECT_NEAR(fh::ssim(a, inv), naive_ssim(a, inv), 1e-6);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
  fh::RgbImage a(10, 32);
  EXPECT_THROW(fh::ssim(a, a), fh::ShapeError);
  EXPECT_THROW(fh::ssim(fh::RgbImage(11, 11), fh::RgbImage(12, 11)), fh::ShapeError);
}

TEST(Ssim, GaussianWindowIsNormalised) {
  const auto k = fh::gaussian_window(11, 1.5);
  double s = 0;
  for (double v : k) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_EQ(k[0], k[10]);
  EXPECT_GT(k[5], k[4]);
}

class LpipsFixture : public ::testing::Test {
 protected:
  static constexpr int kSize = 32;
  fs::path dir = fs::temp_directory_path() / "fh_metrics_lpips";
  std::string ckpt;
  fh::DiscriminatorConfig dcfg;

  void SetUp() override {
    fs::remove_all(dir);
    dcfg.image_size = kSize;
    dcfg.base_channels = 4;
    dcfg.max_channels = 16;
    fh::Discriminator<float> d(dcfg, 99);
    fh::TensorMap<float> tensors;
    for (const auto& [k, v] : d.store().state()) tensors.emplace("discriminator." + k, v);
    nlohmann::json side;
    side["discriminator"] = dcfg;
    side["discriminator_seed"] = 99;
    ckpt = (dir / "d.ckpt").string();
    fh::save_checkpoint(ckpt, tensors, side);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::vector<fh::SamplePair> samples(int n) const {
    fh::SynthConfig sc;
    sc.height = sc.width = kSize;
    auto pairs = fh::synth_generate(n, 4, sc);
    for (auto& p : pairs) p.fundus = fh::normalize(p.fundus);
    return pairs;
  }
};

TEST_F(LpipsFixture, IdentityAndSymmetry) {
  auto model = fh::LpipsModel::load(ckpt);
  fh::Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    const auto x = random_image(kSize, kSize, rng), a = random_image(kSize, kSize, rng),
               b = random_image(kSize, kSize, rng);
    EXPECT_EQ(model.distance(a, a, x), 0.0);
    const double ab = model.distance(a, b, x), ba = model.distance(b, a, x);
    EXPECT_GT(ab, 0.0);
    EXPECT_LT(std::abs(ab - ba), 1e-7);
  }
}

TEST_F(LpipsFixture, MatchesTapLevelRecomputation) {
  auto model = fh::LpipsModel::load(ckpt);
  fh::Rng rng(6);
  const auto x = random_image(kSize, kSize, rng), a = random_image(kSize, kSize, rng),
             b = random_image(kSize, kSize, rng);
  // A second discriminator rebuilt from the same seed produces the same taps.
  fh::Discriminator<float> d(dcfg, 99);
  fh::ag::NoGradGuard no_grad;
  auto tensor = [](const fh::RgbImage& img) {
    return fh::ag::constant(fh::to_tensor<float>(std::vector<fh::RgbImage>{img}));
  };
  const auto ta = d.forward(tensor(x), tensor(a), fh::Mode::Eval).taps;
  const auto tb = d.forward(tensor(x), tensor(b), fh::Mode::Eval).taps;
  ASSERT_EQ(ta.size(), 4u);
  double expected = 0;
  for (std::size_t l = 0; l < ta.size(); ++l) {
    const auto& dims = ta.dims[l];
    double sq = 0;
    const auto fa = ta.features[l].value().vec(), fb = tb.features[l].value().vec();
    ASSERT_EQ(fa.size(), dims.elements());
    for (std::size_t i = 0; i < fa.size(); ++i) sq += std::pow(static_cast<double>(fa[i]) - fb[i], 2);
    expected += sq / (static_cast<double>(dims.width) * dims.height * dims.depth);
  }
  EXPECT_NEAR(model.distance(a, b, x), expected, 1e-6);
}

TEST_F(LpipsFixture, MissingCheckpointIsAnError) {
  EXPECT_THROW(fh::LpipsModel::load((dir / "absent.ckpt").string()), fh::CheckpointError);
  EXPECT_THROW(fh::LpipsModel::load(""), fh::CheckpointError);
}

TEST_F(LpipsFixture, NoiseOrdering) {
  auto model = fh::LpipsModel::load(ckpt);
  fh::Rng rng(7);
  const auto x = random_image(kSize, kSize, rng);
  const auto truth = random_image(kSize, kSize, rng, 0.3, 0.7);
  std::vector<double> noise(truth.pixels.size());
  for (auto& v : noise) v = std::clamp(rng.normal(), -3.0, 3.0);
  double prev_mse = -1, prev_lpips = -1, prev_ssim = 2;
  for (double sigma : {0.01, 0.02, 0.04, 0.06, 0.08}) {
    auto noisy = truth;
    for (std::size_t i = 0; i < noise.size(); ++i) noisy.pixels[i] += sigma * noise[i];
    const double m = fh::mse(noisy, truth), l = model.distance(noisy, truth, x), s = fh::ssim(noisy, truth);
    EXPECT_GE(m, prev_mse);
    EXPECT_GE(l, prev_lpips);
    EXPECT_LE(s, prev_ssim);
    prev_mse = m;
    prev_lpips = l;
    prev_ssim = s;
  }
}

TEST_F(LpipsFixture, PerfectModelScoresPerfectly) {
  auto model = fh::LpipsModel::load(ckpt);
  const auto set = samples(4);
  const auto r = fh::evaluate(set, [](const fh::SamplePair& s) { return s.target.rgb; }, model, fh::ColorMap{});
  EXPECT_EQ(r.n_samples, 4);
  EXPECT_NEAR(r.ssim, 1.0, 1e-12);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(r.lpips, 0.0);
  EXPECT_EQ(r.mae_um, 0.0);
  EXPECT_EQ(r.psnr_db, 100.0);
  EXPECT_EQ(r.provenance.at("lpips_checkpoint_digest"), fh::checkpoint_digest(ckpt));
}

TEST_F(LpipsFixture, AggregatesAreMeansAndDuplicationInvariant) {
  auto model = fh::LpipsModel::load(ckpt);
  auto set = samples(3);
  fh::GeneratorConfig gc;
  gc.image_size = kSize;
  gc.num_unets = 1;
  gc.base_channels = 4;
  gc.unet_depth = 2;
  fh::Generator<float> g(gc, 1);
  const auto predict = fh::generator_predictor(g);
  const auto r = fh::evaluate(set, predict, model, fh::ColorMap{});
  ASSERT_EQ(r.per_sample.size(), 3u);
  double ssim = 0, mse = 0;
  for (const auto& m : r.per_sample) {
    ssim += m.ssim;
    mse += m.mse;
    EXPECT_GT(m.lpips, 0.0);
    EXPECT_GT(m.mae_um, 0.0);
  }
  EXPECT_NEAR(r.ssim, ssim / 3, 1e-12);
  EXPECT_NEAR(r.mse, mse / 3, 1e-12);

  auto doubled = set;
  doubled.insert(doubled.end(), set.begin(), set.end());
  const auto r2 = fh::evaluate(doubled, predict, model, fh::ColorMap{});
  EXPECT_EQ(r2.n_samples, 6);
  EXPECT_NEAR(r2.ssim, r.ssim, 1e-12);
  EXPECT_NEAR(r2.psnr_db, r.psnr_db, 1e-12);
  EXPECT_NEAR(r2.mse, r.mse, 1e-12);
  EXPECT_NEAR(r2.lpips, r.lpips, 1e-12);
  EXPECT_NEAR(r2.mae_um, r.mae_um, 1e-12);

  const auto again = fh::evaluate(set, predict, model, fh::ColorMap{});
  EXPECT_EQ(again, r);
}

TEST_F(LpipsFixture, ReportRoundtripsThroughFiles) {
  auto model = fh::LpipsModel::load(ckpt);
  const auto set = samples(3);
  auto r = fh::evaluate(set, [](const fh::SamplePair& s) {
    auto p = s.target.rgb;
    for (auto& v : p.pixels) v = 1 - v;
    return p;
  }, model, fh::ColorMap{});
  r.provenance["seed"] = 12;
  const auto stem = (dir / "reports" / "eval").string();
  fh::write_report(stem, r);
  EXPECT_TRUE(fs::exists(stem + ".json"));
  EXPECT_TRUE(fs::exists(stem + ".csv"));
  EXPECT_EQ(fh::read_report(stem), r);
}

TEST_F(LpipsFixture, EmptyTestSetIsAnError) {
  auto model = fh::LpipsModel::load(ckpt);
  EXPECT_THROW(fh::evaluate({}, [](const fh::SamplePair& s) { return s.target.rgb; }, model, fh::ColorMap{}),
               fh::DataError);
}

}  // namespace
