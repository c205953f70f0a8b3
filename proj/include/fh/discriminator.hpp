#pragma once

#include <cstdint>
#include <vector>

#include "fh/autograd.hpp"
#include "fh/errors.hpp"
#include "fh/layers.hpp"

namespace fh {

enum class DiscriminatorMode { Image, Patch };

struct DiscriminatorConfig {
  DiscriminatorMode mode = DiscriminatorMode::Image;
  int num_conv_layers = 8;
  /// 1-based conv block indices whose activations are exposed as features.
  std::vector<int> tap_indices{1, 4, 6, 8};
  double leaky_slope = 0.2;
  int base_channels = 32;
  int max_channels = 256;
  int image_size = 128;

  void validate() const;
  /// Spatial size after each block (index 0 = block 1).
  std::vector<int> block_sizes() const;
  std::vector<int> block_channels() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

/// Width, height and depth of one tapped feature map, per sample.
struct TapDims {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::size_t elements() const { return static_cast<std::size_t>(width) * height * depth; }
};

template <class T>
struct FeatureTaps {
  std::vector<ag::Var<T>> features;
  std::vector<TapDims> dims;
  std::size_t size() const { return features.size(); }
};

template <class T>
struct DiscriminatorOutput {
  /// N x 1 x 1 x 1 in image mode, N x 1 x P x P in patch mode; values in (0, 1).
  ag::Var<T> probability;
  FeatureTaps<T> taps;
};

/// Conditional discriminator over concat(fundus, heightmap). Blocks are 3x3
/// convolutions with stride 2 on odd blocks, batch norm on every block but
/// the first, and leaky ReLU. Image mode ends in a fully connected layer,
/// patch mode in a 1-channel 3x3 convolution; both apply a sigmoid.
template <class T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  /// `x` and `y` must both be N x 3 x S x S with S = config().image_size.
  DiscriminatorOutput<T> forward(const ag::Var<T>& x, const ag::Var<T>& y, Mode mode);

  const DiscriminatorConfig& config() const { return cfg_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

 private:
  DiscriminatorConfig cfg_;
  ParameterStore<T> store_;
  std::vector<layers::Conv2d<T>> convs_;
  std::vector<layers::BatchNorm2d<T>> norms_;  // norms_[i] belongs to block i + 2
  layers::Linear<T> fc_;
  layers::Conv2d<T> patch_head_;
};

}  // namespace fh
