#include "fh/generator.hpp"

#include <string>

#include "fh/rng.hpp"

namespace fh {

void GeneratorConfig::validate() const {
  if (num_unets < 1) throw ConfigError("generator: num_unets must be >= 1");
  if (unet_depth < 1) throw ConfigError("generator: unet_depth must be >= 1");
  if (unet_depth > 7)
    throw ConfigError("generator: unet_depth " + std::to_string(unet_depth) +
                      " needs more than 7 halvings of a 128x128 input");
  if (base_channels < 1) throw ConfigError("generator: base_channels must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("generator: dropout_rate must be in [0, 1)");
  if (dropout_blocks < 0) throw ConfigError("generator: dropout_blocks must be >= 0");
  if (image_size < 1 || image_size % (1 << unet_depth) != 0)
    throw ConfigError("generator: image_size " + std::to_string(image_size) +
                      " is not divisible by 2^" + std::to_string(unet_depth));
}

template <class T>
ag::Var<T> aggregate_heads(const std::vector<ag::Var<T>>& heads, HeadAggregation mode) {
  if (heads.empty()) throw std::invalid_argument("aggregate_heads: no heads");
  if (heads.size() == 1) return heads.front();
  return mode == HeadAggregation::Mean ? ag::mean_of(heads) : ag::max_of(heads);
}

namespace {

template <class T>
struct DoubleConv {
  layers::Conv2d<T> conv1, conv2;
  layers::BatchNorm2d<T> bn1, bn2;

  DoubleConv() = default;
  DoubleConv(ParameterStore<T>& store, const std::string& name, int in, int out, Rng& rng)
      : conv1(store, name + ".conv1", in, out, 3, 1, 1, false, rng),
        conv2(store, name + ".conv2", out, out, 3, 1, 1, false, rng),
        bn1(store, name + ".bn1", out),
        bn2(store, name + ".bn2", out) {}

  ag::Var<T> operator()(const ag::Var<T>& x, Mode mode) const {
    auto h = ag::relu(bn1(conv1(x), mode));
    return ag::relu(bn2(conv2(h), mode));
  }
};

}  // namespace

template <class T>
struct Generator<T>::UNet {
  int depth;
  std::vector<DoubleConv<T>> enc;
  std::vector<layers::Conv2d<T>> down;
  std::vector<layers::BatchNorm2d<T>> down_bn;
  DoubleConv<T> bottleneck;
  std::vector<layers::ConvTranspose2d<T>> up;
  std::vector<layers::BatchNorm2d<T>> up_bn;
  std::vector<DoubleConv<T>> dec;
  layers::Conv2d<T> head;

  UNet(ParameterStore<T>& store, int index, int in_channels, const GeneratorConfig& cfg,
       Rng& rng)
      : depth(cfg.unet_depth) {
    const std::string p = "unet" + std::to_string(index + 1);
    auto ch = [&](int level) { return cfg.base_channels << level; };
    int in = in_channels;
    for (int l = 0; l < depth; ++l) {
      const std::string lv = std::to_string(l);
      enc.emplace_back(store, p + ".enc" + lv, in, ch(l), rng);
      down.emplace_back(store, p + ".down" + lv + ".conv", ch(l), ch(l), 4, 2, 1, false, rng);
      down_bn.emplace_back(store, p + ".down" + lv + ".bn", ch(l));
      in = ch(l);
    }
    bottleneck = DoubleConv<T>(store, p + ".bottleneck", ch(depth - 1), ch(depth), rng);
    up.resize(depth);
    up_bn.resize(depth);
    dec.resize(depth);
    for (int l = depth - 1; l >= 0; --l) {
      const std::string lv = std::to_string(l);
      up[l] = layers::ConvTranspose2d<T>(store, p + ".up" + lv + ".convt", ch(l + 1), ch(l), 4,
                                         2, 1, false, rng);
      up_bn[l] = layers::BatchNorm2d<T>(store, p + ".up" + lv + ".bn", ch(l));
      dec[l] = DoubleConv<T>(store, p + ".dec" + lv, 2 * ch(l), ch(l), rng);
    }
    head = layers::Conv2d<T>(store, p + ".head", ch(0), 3, 1, 1, 0, true, rng);
  }

  ag::Var<T> operator()(const ag::Var<T>& x, Mode mode, const GeneratorConfig& cfg,
                        std::uint64_t noise_seed) const {
    std::vector<ag::Var<T>> skips(depth);
    ag::Var<T> h = x;
    for (int l = 0; l < depth; ++l) {
      h = enc[l](h, mode);
      skips[l] = h;
      h = ag::relu(down_bn[l](down[l](h), mode));
    }
    h = bottleneck(h, mode);
    for (int l = depth - 1; l >= 0; --l) {
      h = ag::relu(up_bn[l](up[l](h), mode));
      const bool innermost = l >= depth - cfg.dropout_blocks;
      if (mode == Mode::Train && innermost)
        h = ag::dropout(h, cfg.dropout_rate, derive_seed(noise_seed, static_cast<std::uint64_t>(l)));
      h = dec[l](ag::concat_channels(h, skips[l]), mode);
    }
    return ag::sigmoid(head(h));
  }
};

template <class T>
Generator<T>::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  for (int k = 0; k < cfg_.num_unets; ++k) {
    // Each U-Net draws from its own stream, so U-Net k initialises the same
    // way whether the stack is built at once or grown.
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    unets_.push_back(std::make_unique<UNet>(store_, k, k == 0 ? 3 : 6, cfg_, rng));
  }
}

template <class T>
Generator<T>::~Generator() = default;
template <class T>
Generator<T>::Generator(Generator&&) noexcept = default;
template <class T>
Generator<T>& Generator<T>::operator=(Generator&&) noexcept = default;

template <class T>
GeneratorOutput<T> Generator<T>::forward(const ag::Var<T>& x, Mode mode,
                                         std::uint64_t noise_seed) {
  const Shape s = x.shape();
  if (s.c != 3 || s.h != cfg_.image_size || s.w != cfg_.image_size || s.n < 1)
    throw ShapeError("generator: expected input [N x 3 x " + std::to_string(cfg_.image_size) +
                     " x " + std::to_string(cfg_.image_size) + "], got " + s.str());
  GeneratorOutput<T> out;
  for (std::size_t k = 0; k < unets_.size(); ++k) {
    const ag::Var<T> in = k == 0 ? x : ag::concat_channels(x, out.heads.back());
    out.heads.push_back((*unets_[k])(in, mode, cfg_, derive_seed(noise_seed, 1000 + k)));
  }
  out.final = cfg_.deep_supervision ? aggregate_heads(out.heads, cfg_.head_aggregation)
                                    : out.heads.back();
  return out;
}

template <class T>
Generator<T> grow_stack(const Generator<T>& current, const TensorMap<T>& checkpoint) {
  const auto bad = current.store().mismatches(checkpoint);
  if (!bad.empty()) {
    std::string msg = "grow_stack: checkpoint does not match the " +
                      std::to_string(current.config().num_unets) + "-U-Net generator:";
    for (const auto& n : bad) msg += " " + n;
    throw CheckpointError(msg, bad);
  }
  GeneratorConfig next = current.config();
  next.num_unets += 1;
  Generator<T> grown(next, current.seed());
  grown.store().load(checkpoint);
  return grown;
}

template ag::Var<float> aggregate_heads<float>(const std::vector<ag::Var<float>>&,
                                               HeadAggregation);
template ag::Var<double> aggregate_heads<double>(const std::vector<ag::Var<double>>&,
                                                 HeadAggregation);
template class Generator<float>;
template class Generator<double>;
template Generator<float> grow_stack<float>(const Generator<float>&, const TensorMap<float>&);
template Generator<double> grow_stack<double>(const Generator<double>&,
                                              const TensorMap<double>&);

}  // namespace fh
