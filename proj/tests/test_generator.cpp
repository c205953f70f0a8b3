#include <gtest/gtest.h>

#include <cmath>

#include "fh/generator.hpp"
#include "gradcheck.hpp"

namespace {

using fh::Generator;
using fh::GeneratorConfig;
using fh::HeadAggregation;
using fh::Mode;
using fh::Rng;
using fh::Tensor;
namespace ag = fh::ag;

GeneratorConfig small_config(int k) {
  GeneratorConfig cfg;
  cfg.num_unets = k;
  cfg.unet_depth = 2;
  cfg.base_channels = 4;
  cfg.image_size = 16;
  return cfg;
}

template <class T>
Tensor<T> random_input(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t({n, 3, size, size});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform());
  return t;
}

// Parameters of one U-Net, counted layer by layer from the channel plan.
std::size_t unet_parameters(int in, int base, int depth) {
  auto double_conv = [](std::size_t a, std::size_t b) { return 9 * a * b + 9 * b * b + 4 * b; };
  std::size_t total = 0;
  std::size_t prev = in;
  for (int l = 0; l < depth; ++l) {
    const std::size_t c = static_cast<std::size_t>(base) << l;
    total += double_conv(prev, c);       // encoder block
    total += 16 * c * c + 2 * c;         // 4x4 stride-2 conv + BN
    total += 16 * 2 * c * c + 2 * c;     // 4x4 transposed conv from 2c + BN
    total += double_conv(2 * c, c);      // decoder block on the concatenated skip
    prev = c;
  }
  total += double_conv(prev, 2 * prev);  // bottleneck
  total += static_cast<std::size_t>(base) * 3 + 3;
  return total;
}

TEST(Generator, ParameterCountMatchesChannelArithmetic) {
  GeneratorConfig cfg;
  cfg.num_unets = 1;
  cfg.unet_depth = 4;
  cfg.base_channels = 16;
  Generator<float> g(cfg, 1);
  EXPECT_EQ(unet_parameters(3, 16, 4), 2813731u);
  EXPECT_EQ(g.parameter_count(), 2813731u);

  cfg.num_unets = 3;
  Generator<float> g3(cfg, 1);
  EXPECT_EQ(g3.parameter_count(), unet_parameters(3, 16, 4) + 2 * unet_parameters(6, 16, 4));
}

TEST(Generator, SameSeedGivesIdenticalParameters) {
  Generator<float> a(small_config(2), 5), b(small_config(2), 5), c(small_config(2), 6);
  EXPECT_EQ(a.store().state(), b.store().state());
  EXPECT_NE(a.store().state(), c.store().state());
}

TEST(Generator, DefaultConfigRunsAt128) {
  Generator<float> g(GeneratorConfig{}, 3);
  auto out = g.forward(random_input<float>(1, 128, 1), Mode::Eval);
  ASSERT_EQ(out.heads.size(), 3u);
  EXPECT_EQ(out.final.shape(), (fh::Shape{1, 3, 128, 128}));
  for (float v : out.final.value().vec()) {
    EXPECT_GE(v, 0.f);
    EXPECT_LE(v, 1.f);
  }
}

TEST(Generator, EvalModeIsBitwiseDeterministic) {
  Generator<float> g(small_config(2), 3);
  const auto x = random_input<float>(2, 16, 2);
  EXPECT_EQ(g.forward(x, Mode::Eval).final.value().vec(),
            g.forward(x, Mode::Eval).final.value().vec());
}

TEST(Generator, TrainModeNoiseFollowsSeed) {
  Generator<float> g(small_config(1), 3);
  const auto x = random_input<float>(2, 16, 2);
  const auto a = g.forward(x, Mode::Train, 7).final.value().vec();
  EXPECT_EQ(a, g.forward(x, Mode::Train, 7).final.value().vec());
  EXPECT_NE(a, g.forward(x, Mode::Train, 8).final.value().vec());
}

TEST(Generator, FinalIsMeanOfHeads) {
  for (int k : {1, 2, 3, 5}) {
    Generator<float> g(small_config(k), 11);
    auto out = g.forward(random_input<float>(2, 16, 4), Mode::Eval);
    ASSERT_EQ(out.heads.size(), static_cast<std::size_t>(k));
    double worst = 0;
    for (std::size_t i = 0; i < out.final.value().size(); ++i) {
      double s = 0;
      for (const auto& h : out.heads) s += h.value()[i];
      worst = std::max(worst, std::abs(s / k - out.final.value()[i]));
    }
    EXPECT_LE(worst, 1e-6) << "K=" << k;
  }
}

TEST(Generator, EqualHeadsAggregateToThemselves) {
  Generator<float> g(small_config(3), 2);
  // Zero every head kernel and share one bias so all heads emit sigmoid(0.3).
  for (auto& [name, v] : g.store().parameters()) {
    if (name.find(".head.weight") != std::string::npos) v.node()->value.fill(0.f);
    if (name.find(".head.bias") != std::string::npos) v.node()->value.fill(0.3f);
  }
  auto out = g.forward(random_input<float>(1, 16, 5), Mode::Eval);
  const float a = 1.f / (1.f + std::exp(-0.3f));
  for (float v : out.final.value().vec()) EXPECT_NEAR(v, a, 1e-7);
}

TEST(Generator, WithoutDeepSupervisionFinalIsLastHead) {
  auto cfg = small_config(3);
  cfg.deep_supervision = false;
  Generator<float> g(cfg, 2);
  auto out = g.forward(random_input<float>(1, 16, 5), Mode::Eval);
  EXPECT_EQ(out.final.value().vec(), out.heads.back().value().vec());
}

TEST(AggregateHeads, Examples) {
  const fh::Shape s{1, 3, 2, 2};
  auto zero = ag::constant(Tensor<float>(s, 0.f));
  auto one = ag::constant(Tensor<float>(s, 1.f));
  EXPECT_EQ(fh::aggregate_heads<float>({one}, HeadAggregation::Mean).value().vec(),
            one.value().vec());
  const auto mean = fh::aggregate_heads<float>({zero, one}, HeadAggregation::Mean);
  for (float v : mean.value().vec()) EXPECT_EQ(v, 0.5f);
  const auto max = fh::aggregate_heads<float>({zero, one}, HeadAggregation::Max);
  for (float v : max.value().vec()) EXPECT_EQ(v, 1.f);
  EXPECT_THROW(fh::aggregate_heads<float>({}, HeadAggregation::Mean), std::invalid_argument);
}

TEST(Generator, MaxAggregationIsElementwiseMax) {
  auto cfg = small_config(3);
  cfg.head_aggregation = HeadAggregation::Max;
  Generator<float> g(cfg, 9);
  auto out = g.forward(random_input<float>(1, 16, 3), Mode::Eval);
  for (std::size_t i = 0; i < out.final.value().size(); ++i) {
    float m = out.heads[0].value()[i];
    for (const auto& h : out.heads) m = std::max(m, h.value()[i]);
    EXPECT_EQ(out.final.value()[i], m);
  }
}

TEST(Generator, OutputSizeEqualsInputSizeForEveryDepth) {
  for (int depth = 1; depth <= 5; ++depth) {
    GeneratorConfig cfg = small_config(1);
    cfg.unet_depth = depth;
    cfg.image_size = 32;
    cfg.base_channels = 2;
    Generator<float> g(cfg, 1);
    EXPECT_EQ(g.forward(random_input<float>(1, 32, 1), Mode::Eval).final.shape(),
              (fh::Shape{1, 3, 32, 32}));
  }
}

TEST(Generator, RejectsInvalidConfigAndInput) {
  GeneratorConfig cfg;
  cfg.unet_depth = 8;
  EXPECT_THROW(Generator<float>(cfg, 1), fh::ConfigError);
  cfg.unet_depth = 4;
  cfg.num_unets = 0;
  EXPECT_THROW(Generator<float>(cfg, 1), fh::ConfigError);

  Generator<float> g(small_config(1), 1);
  try {
    g.forward(Tensor<float>({1, 3, 8, 8}), Mode::Eval);
    FAIL() << "expected ShapeError";
  } catch (const fh::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("expected input [N x 3 x 16 x 16], got"),
              std::string::npos)
        << e.what();
  }
}

TEST(Generator, GradientReachesFirstUNet) {
  Generator<float> g(small_config(3), 4);
  auto out = g.forward(random_input<float>(2, 16, 6), Mode::Train, 1);
  Rng rng(1);
  Tensor<float> target(out.final.shape());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = static_cast<float>(rng.uniform());
  ag::backward(ag::mean_squared_error(out.final, ag::constant(target)));
  double norm = 0;
  for (const auto& [name, v] : g.store().parameters())
    if (name.rfind("unet1.", 0) == 0 && !v.grad().empty())
      for (float x : v.grad().vec()) norm += static_cast<double>(x) * x;
  EXPECT_GT(norm, 0.0);
}

TEST(GrowStack, KeepsExistingHeadsBitwise) {
  Generator<float> g1(small_config(1), 21);
  const auto probe = random_input<float>(2, 16, 8);
  // Train-mode forwards move the running statistics away from their defaults.
  for (int i = 0; i < 3; ++i) g1.forward(random_input<float>(2, 16, 30 + i), Mode::Train, i);
  const auto before = g1.forward(probe, Mode::Eval).heads;

  Generator<float> g2 = fh::grow_stack(g1, g1.store().state());
  EXPECT_EQ(g2.config().num_unets, 2);
  EXPECT_GT(g2.parameter_count(), g1.parameter_count());
  auto after = g2.forward(probe, Mode::Eval).heads;
  ASSERT_EQ(after.size(), 2u);
  EXPECT_EQ(after[0].value().vec(), before[0].value().vec());

  Generator<float> g3 = fh::grow_stack(g2, g2.store().state());
  auto after3 = g3.forward(probe, Mode::Eval).heads;
  ASSERT_EQ(after3.size(), 3u);
  EXPECT_EQ(after3[0].value().vec(), after[0].value().vec());
  EXPECT_EQ(after3[1].value().vec(), after[1].value().vec());
}

TEST(GrowStack, RejectsMismatchedCheckpointListingNames) {
  Generator<float> g1(small_config(1), 21);
  auto other_cfg = small_config(1);
  other_cfg.unet_depth = 3;
  Generator<float> deeper(other_cfg, 21);
  try {
    fh::grow_stack(g1, deeper.store().state());
    FAIL() << "expected CheckpointError";
  } catch (const fh::CheckpointError& e) {
    EXPECT_FALSE(e.names().empty());
    bool saw_enc2 = false;
    for (const auto& n : e.names()) saw_enc2 |= n.find("enc2") != std::string::npos;
    EXPECT_TRUE(saw_enc2);
  }
}

TEST(Generator, ParameterGradientsMatchFiniteDifferences) {
  GeneratorConfig cfg = small_config(2);
  cfg.image_size = 8;
  cfg.base_channels = 2;
  Generator<double> g(cfg, 5);
  const auto x = random_input<double>(2, 8, 3);
  Rng rng(4);
  const auto target = fh::testing::random_tensor({2, 3, 8, 8}, rng, 0, 1);
  auto r = fh::testing::check_gradients(g.store().parameters(), [&] {
    auto out = g.forward(x, Mode::Train, 17);
    return ag::mean_squared_error(out.final, ag::constant(target));
  });
  EXPECT_LT(r.worst, 1e-4) << r.worst_name;
}

}  // namespace
