#include <gtest/gtest.h>

#include "fh/generator.hpp"
#include "fh/losses.hpp"
#include "gradcheck.hpp"

namespace {

using fh::FeatureTaps;
using fh::LossWeights;
using fh::Mode;
using fh::PerceptualSign;
using fh::PixelNorm;
using fh::Rng;
using fh::Shape;
using fh::Tensor;
using fh::ag::Var;
namespace ag = fh::ag;

Var<double> filled(Shape s, double v) { return ag::constant(Tensor<double>(s, v)); }
Var<double> scalar(double v) { return filled({}, v); }

TEST(Lsgan, DiscriminatorExamples) {
  EXPECT_NEAR(fh::lsgan_d_loss(scalar(1), scalar(0)).item(), 0.0, 1e-12);
  EXPECT_NEAR(fh::lsgan_d_loss(scalar(0.5), scalar(0.5)).item(), 0.25, 1e-12);
  EXPECT_NEAR(fh::lsgan_d_loss(scalar(0), scalar(1)).item(), 1.0, 1e-12);
}

TEST(Lsgan, GeneratorExamples) {
  EXPECT_NEAR(fh::lsgan_g_loss(scalar(1)).item(), 0.0, 1e-12);
  EXPECT_NEAR(fh::lsgan_g_loss(scalar(0)).item(), 0.5, 1e-12);
  EXPECT_NEAR(fh::lsgan_g_loss(scalar(0.5)).item(), 0.125, 1e-12);
}

TEST(Lsgan, PatchMapsAreMeanReduced) {
  const Shape map{2, 1, 4, 4};
  EXPECT_NEAR(fh::lsgan_d_loss(filled(map, 0.5), filled(map, 0.5)).item(), 0.25, 1e-12);
  Tensor<double> half(map, 1.0);
  for (std::size_t i = 0; i < half.size() / 2; ++i) half[i] = 0.0;
  // Half the patches at the fake target, half off by one: mean 0.5, halved.
  EXPECT_NEAR(fh::lsgan_g_loss(ag::constant(half)).item(), 0.25, 1e-12);
}

TEST(PixelLoss, Examples) {
  const Shape s{2, 3, 4, 4};
  EXPECT_EQ(fh::pixel_loss(filled(s, 0.3), filled(s, 0.3), PixelNorm::L2).item(), 0.0);
  EXPECT_NEAR(fh::pixel_loss(filled(s, 0.4), filled(s, 0.3), PixelNorm::L2).item(), 0.01, 1e-12);
  EXPECT_NEAR(fh::pixel_loss(filled(s, 0.4), filled(s, 0.3), PixelNorm::L1).item(), 0.1, 1e-12);
  EXPECT_THROW(fh::pixel_loss(filled(s, 0), filled({1, 3, 4, 4}, 0), PixelNorm::L2),
               fh::ShapeError);
}

FeatureTaps<double> taps_of(std::vector<Tensor<double>> ts) {
  FeatureTaps<double> taps;
  for (auto& t : ts) {
    taps.dims.push_back({t.shape().w, t.shape().h, t.shape().c});
    taps.features.push_back(ag::constant(std::move(t)));
  }
  return taps;
}

TEST(PerceptualLoss, Examples) {
  const Shape s{1, 2, 2, 2};
  EXPECT_EQ(fh::perceptual_loss(taps_of({Tensor<double>(s, 0.7)}),
                                taps_of({Tensor<double>(s, 0.7)}), {3.0})
                .item(),
            0.0);
  // 8 elements each differing by 0.5, lambda 2: 2 * (1/8) * (8 * 0.5) = 1.
  EXPECT_NEAR(fh::perceptual_loss(taps_of({Tensor<double>(s, 0.0)}),
                                  taps_of({Tensor<double>(s, 0.5)}), {2.0})
                  .item(),
              1.0, 1e-12);
}

TEST(PerceptualLoss, LinearInLambdaAndNormalisedPerTap) {
  Rng rng(3);
  auto make = [&] {
    return taps_of({fh::testing::random_tensor({2, 4, 8, 8}, rng),
                    fh::testing::random_tensor({2, 8, 2, 2}, rng)});
  };
  auto a = make(), b = make();
  const double base = fh::perceptual_loss(a, b, {1.5, 0.5}).item();
  EXPECT_NEAR(fh::perceptual_loss(a, b, {3.0, 1.0}).item(), 2 * base, 1e-12);

  // Independent evaluation of sum_i lambda_i / (w h d) * sum |diff|, averaged over the batch.
  double expect = 0;
  const std::vector<double> lambda{1.5, 0.5};
  for (std::size_t t = 0; t < 2; ++t) {
    const auto& x = a.features[t].value();
    const auto& y = b.features[t].value();
    double sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(x[i] - y[i]);
    expect += lambda[t] * sum / static_cast<double>(a.dims[t].elements()) / 2.0;
  }
  EXPECT_NEAR(base, expect, 1e-12);
}

TEST(PerceptualLoss, RejectsMisalignedTaps) {
  auto a = taps_of({Tensor<double>({1, 2, 2, 2})});
  auto b = taps_of({Tensor<double>({1, 2, 4, 4})});
  EXPECT_THROW(fh::perceptual_loss(a, b, {1.0}), fh::ShapeError);
  EXPECT_THROW(fh::perceptual_loss(a, a, {1.0, 2.0}), fh::ShapeError);
}

TEST(GeneratorTotal, Examples) {
  LossWeights w;
  auto zero = fh::generator_total<double>({scalar(0), scalar(0), scalar(0)}, w);
  EXPECT_EQ(zero.breakdown.total, 0.0);
  auto ones = fh::generator_total<double>({scalar(1), scalar(1), scalar(1)}, w);
  EXPECT_NEAR(ones.breakdown.total, 151.0, 1e-12);
  EXPECT_NEAR(ones.total.item(), 151.0, 1e-12);

  w.alpha_adv = 0;
  const double a = fh::generator_total<double>({scalar(1), scalar(2), scalar(3)}, w).breakdown.total;
  const double b = fh::generator_total<double>({scalar(9), scalar(2), scalar(3)}, w).breakdown.total;
  EXPECT_EQ(a, b);
}

TEST(GeneratorTotal, AffineInEachAlpha) {
  const fh::LossParts<double> parts{scalar(0.3), scalar(0.7), scalar(0.2)};
  LossWeights w;
  auto total_at = [&](double alpha) {
    LossWeights v = w;
    v.alpha_pixel = alpha;
    return fh::generator_total(parts, v).breakdown.total;
  };
  const double t0 = total_at(0), t1 = total_at(1), t5 = total_at(5);
  EXPECT_NEAR(t5 - t0, 5 * (t1 - t0), 1e-9);
  EXPECT_NEAR(t1 - t0, 0.7, 1e-12);
}

TEST(GeneratorTotal, NonFinitePartNamesTheTerm) {
  LossWeights w;
  try {
    fh::generator_total<double>({scalar(0), scalar(std::nan("")), scalar(0)}, w);
    FAIL();
  } catch (const fh::TrainingDivergence& e) {
    EXPECT_EQ(e.term(), "pixel");
  }
  EXPECT_THROW(fh::generator_total<double>({scalar(INFINITY), scalar(0), scalar(0)}, w),
               fh::TrainingDivergence);
}

TEST(DiscriminatorTotal, Examples) {
  EXPECT_NEAR(fh::discriminator_total(scalar(0.25), scalar(0.1), 0.0,
                                      PerceptualSign::MaximizeDiscrepancy)
                  .item(),
              0.25, 1e-12);
  EXPECT_NEAR(fh::discriminator_total(scalar(0.25), scalar(0.1), 1.0,
                                      PerceptualSign::MaximizeDiscrepancy)
                  .item(),
              0.15, 1e-12);
  EXPECT_NEAR(fh::discriminator_total(scalar(0.25), scalar(0.1), 1.0,
                                      PerceptualSign::MinimizeDiscrepancy)
                  .item(),
              0.35, 1e-12);
}

TEST(LossWeights, DefaultsAndValidation) {
  LossWeights w;
  EXPECT_EQ(w.alpha_perceptual, 100.0);
  EXPECT_EQ(w.alpha_pixel, 1.0);
  EXPECT_EQ(w.alpha_adv, 50.0);
  EXPECT_EQ(w.lambda_per_tap, (std::vector<double>{5.0, 1.0, 5.0, 5.0}));
  EXPECT_EQ(w.lsgan, (fh::LsganTargets{0.0, 1.0, 1.0}));
  EXPECT_NO_THROW(w.validate(4));
  EXPECT_THROW(w.validate(3), fh::ConfigError);
}

TEST(Losses, MeanReductionIsInvariantToReplicatedBatches) {
  Rng rng(9);
  const auto a = fh::testing::random_tensor({1, 3, 4, 4}, rng, 0, 1);
  const auto b = fh::testing::random_tensor({1, 3, 4, 4}, rng, 0, 1);
  auto replicate = [](const Tensor<double>& t, int k) {
    std::vector<Tensor<double>> copies(k, t);
    return ag::constant(fh::stack_samples<double>(copies));
  };
  for (int k : {2, 5}) {
    for (auto norm : {PixelNorm::L1, PixelNorm::L2})
      EXPECT_NEAR(fh::pixel_loss(replicate(a, k), replicate(b, k), norm).item(),
                  fh::pixel_loss(ag::constant(a), ag::constant(b), norm).item(), 1e-12);
    EXPECT_NEAR(fh::lsgan_d_loss(replicate(a, k), replicate(b, k)).item(),
                fh::lsgan_d_loss(ag::constant(a), ag::constant(b)).item(), 1e-12);
    EXPECT_NEAR(fh::perceptual_loss(taps_of({replicate(a, k).value()}),
                                    taps_of({replicate(b, k).value()}), {2.0})
                    .item(),
                fh::perceptual_loss(taps_of({a}), taps_of({b}), {2.0}).item(), 1e-12);
  }
}

// Gradient checks for every loss term through tiny networks on 8x8 inputs.
class LossGradients : public ::testing::Test {
 protected:
  LossGradients() : gen_(gen_config(), 3), disc_(disc_config(), 4) {
    Rng rng(5);
    x_ = ag::constant(fh::testing::random_tensor({4, 3, 8, 8}, rng, 0, 1));
    y_ = ag::constant(fh::testing::random_tensor({4, 3, 8, 8}, rng, 0, 1));
  }

  static fh::GeneratorConfig gen_config() {
    fh::GeneratorConfig cfg;
    cfg.num_unets = 2;
    cfg.unet_depth = 2;
    cfg.base_channels = 2;
    cfg.image_size = 8;
    return cfg;
  }
  static fh::DiscriminatorConfig disc_config() {
    fh::DiscriminatorConfig cfg;
    cfg.base_channels = 2;
    cfg.max_channels = 8;
    cfg.image_size = 8;
    return cfg;
  }

  Var<double> fake() { return gen_.forward(x_, Mode::Train, 11).final; }

  fh::LossParts<double> generator_parts(PixelNorm norm) {
    auto y_hat = fake();
    FeatureTaps<double> real;
    {
      ag::NoGradGuard guard;
      real = disc_.forward(x_, y_, Mode::Train).taps;
    }
    auto d_fake = disc_.forward(x_, y_hat, Mode::Train);
    return {fh::lsgan_g_loss(d_fake.probability), fh::pixel_loss(y_hat, y_, norm),
            fh::perceptual_loss(real, d_fake.taps, LossWeights{}.lambda_per_tap)};
  }

  void expect_generator_gradients(const std::function<Var<double>()>& loss) {
    auto r = fh::testing::check_gradients(gen_.store().parameters(), loss);
    EXPECT_LT(r.worst, 1e-4) << r.worst_name;
  }
  void expect_discriminator_gradients(const std::function<Var<double>()>& loss) {
    auto r = fh::testing::check_gradients(disc_.store().parameters(), loss);
    EXPECT_LT(r.worst, 1e-4) << r.worst_name;
  }

  fh::Generator<double> gen_;
  fh::Discriminator<double> disc_;
  Var<double> x_, y_;
};

TEST_F(LossGradients, LsganDiscriminator) {
  expect_discriminator_gradients([&] {
    auto f = ag::detach(fake());
    return fh::lsgan_d_loss(disc_.forward(x_, y_, Mode::Train).probability,
                            disc_.forward(x_, f, Mode::Train).probability);
  });
}

TEST_F(LossGradients, LsganGenerator) {
  expect_generator_gradients([&] { return generator_parts(PixelNorm::L2).adversarial; });
}

TEST_F(LossGradients, PixelL2AndL1) {
  expect_generator_gradients([&] { return generator_parts(PixelNorm::L2).pixel; });
  expect_generator_gradients([&] { return generator_parts(PixelNorm::L1).pixel; });
}

TEST_F(LossGradients, Perceptual) {
  expect_generator_gradients([&] { return generator_parts(PixelNorm::L2).perceptual; });
}

TEST_F(LossGradients, GeneratorComposite) {
  expect_generator_gradients(
      [&] { return fh::generator_total(generator_parts(PixelNorm::L2), LossWeights{}).total; });
}

TEST_F(LossGradients, DiscriminatorComposite) {
  expect_discriminator_gradients([&] {
    auto f = ag::detach(fake());
    auto real = disc_.forward(x_, y_, Mode::Train);
    auto d_fake = disc_.forward(x_, f, Mode::Train);
    auto lsgan = fh::lsgan_d_loss(real.probability, d_fake.probability);
    auto per = fh::perceptual_loss(real.taps, d_fake.taps, LossWeights{}.lambda_per_tap);
    return fh::discriminator_total(lsgan, per, 1.0, PerceptualSign::MaximizeDiscrepancy);
  });
}

}  // namespace
