#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fh/autograd.hpp"
#include "fh/errors.hpp"
#include "fh/layers.hpp"

namespace fh {

enum class HeadAggregation { Mean, Max };

struct GeneratorConfig {
  int num_unets = 3;
  int unet_depth = 4;
  int base_channels = 32;
  /// Dropout in the innermost decoder blocks; the generator's only noise source.
  double dropout_rate = 0.5;
  int dropout_blocks = 3;
  bool deep_supervision = true;
  HeadAggregation head_aggregation = HeadAggregation::Mean;
  int image_size = 128;

  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

template <class T>
struct GeneratorOutput {
  ag::Var<T> final;
  std::vector<ag::Var<T>> heads;
};

/// Elementwise mean (or max) of same-shape head outputs.
template <class T>
ag::Var<T> aggregate_heads(const std::vector<ag::Var<T>>& heads, HeadAggregation mode);

/// A stack of U-Nets. U-Net 1 reads the 3-channel fundus; U-Net k > 1 reads
/// the fundus concatenated with head k-1. Each U-Net ends in a 1x1 convolution
/// and sigmoid producing a 3-channel head in [0, 1].
///
/// Parameter names are stable ("unet{k}.enc{l}.conv1.weight", ...) and are the
/// contract grow_stack relies on.
template <class T>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);
  ~Generator();
  Generator(Generator&&) noexcept;
  Generator& operator=(Generator&&) noexcept;

  /// `x` must be N x 3 x S x S with S = config().image_size. In eval mode
  /// dropout is off and the output is a pure function of weights and input.
  /// `noise_seed` selects the dropout masks in train mode.
  GeneratorOutput<T> forward(const ag::Var<T>& x, Mode mode, std::uint64_t noise_seed = 0);
  GeneratorOutput<T> forward(const Tensor<T>& x, Mode mode, std::uint64_t noise_seed = 0) {
    return forward(ag::constant(x), mode, noise_seed);
  }

  const GeneratorConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

 private:
  struct UNet;
  GeneratorConfig cfg_;
  std::uint64_t seed_;
  ParameterStore<T> store_;
  std::vector<std::unique_ptr<UNet>> unets_;
};

/// Builds a generator with one more U-Net whose first k U-Nets carry the
/// weights in `checkpoint` exactly. `checkpoint` must match `current`'s
/// architecture; otherwise CheckpointError lists the offending names.
template <class T>
Generator<T> grow_stack(const Generator<T>& current, const TensorMap<T>& checkpoint);

}  // namespace fh
