#include "fh/discriminator.hpp"

#include <algorithm>
#include <string>

#include "fh/rng.hpp"

namespace fh {

void DiscriminatorConfig::validate() const {
  if (num_conv_layers < 1) throw ConfigError("discriminator: num_conv_layers must be >= 1");
  if (base_channels < 1 || max_channels < base_channels)
    throw ConfigError("discriminator: invalid channel plan");
  if (image_size < 1) throw ConfigError("discriminator: image_size must be >= 1");
  for (std::size_t i = 0; i < tap_indices.size(); ++i) {
    const int t = tap_indices[i];
    if (t < 1 || t > num_conv_layers)
      throw ConfigError("discriminator: tap index " + std::to_string(t) + " outside 1.." +
                        std::to_string(num_conv_layers));
    if (i > 0 && t <= tap_indices[i - 1])
      throw ConfigError("discriminator: tap indices must be strictly increasing");
  }
}

std::vector<int> DiscriminatorConfig::block_sizes() const {
  std::vector<int> sizes;
  int s = image_size;
  for (int b = 1; b <= num_conv_layers; ++b) {
    if (b % 2 == 1) s = (s - 1) / 2 + 1;  // 3x3, stride 2, pad 1
    sizes.push_back(s);
  }
  return sizes;
}

std::vector<int> DiscriminatorConfig::block_channels() const {
  std::vector<int> ch;
  int c = base_channels;
  for (int b = 1; b <= num_conv_layers; ++b) {
    if (b > 1 && b % 2 == 1) c = std::min(max_channels, c * 2);
    ch.push_back(c);
  }
  return ch;
}

template <class T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0xD15C));
  const auto ch = cfg_.block_channels();
  int in = 6;
  for (int b = 1; b <= cfg_.num_conv_layers; ++b) {
    const std::string name = "block" + std::to_string(b);
    const int stride = b % 2 == 1 ? 2 : 1;
    convs_.emplace_back(store_, name + ".conv", in, ch[b - 1], 3, stride, 1, b == 1, rng);
    if (b > 1) norms_.emplace_back(store_, name + ".bn", ch[b - 1]);
    in = ch[b - 1];
  }
  const int last = cfg_.block_sizes().back();
  if (cfg_.mode == DiscriminatorMode::Image)
    fc_ = layers::Linear<T>(store_, "fc", in * last * last, 1, rng);
  else
    patch_head_ = layers::Conv2d<T>(store_, "patch_head", in, 1, 3, 1, 1, true, rng);
}

template <class T>
DiscriminatorOutput<T> Discriminator<T>::forward(const ag::Var<T>& x, const ag::Var<T>& y,
                                                 Mode mode) {
  require_same_shape(x.shape(), y.shape(), "discriminator input (fundus vs heightmap)");
  const Shape s = x.shape();
  if (s.c != 3 || s.h != cfg_.image_size || s.w != cfg_.image_size)
    throw ShapeError("discriminator: expected [N x 3 x " + std::to_string(cfg_.image_size) +
                     " x " + std::to_string(cfg_.image_size) + "] inputs, got " + s.str());
  DiscriminatorOutput<T> out;
  ag::Var<T> h = ag::concat_channels(x, y);
  std::size_t next_tap = 0;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  for (int b = 1; b <= cfg_.num_conv_layers; ++b) {
    h = convs_[b - 1](h);
    if (b > 1) h = norms_[b - 2](h, mode);
    h = ag::leaky_relu(h, slope);
    if (next_tap < cfg_.tap_indices.size() && cfg_.tap_indices[next_tap] == b) {
      const Shape hs = h.shape();
      out.taps.features.push_back(h);
      out.taps.dims.push_back(TapDims{hs.w, hs.h, hs.c});
      ++next_tap;
    }
  }
  out.probability = ag::sigmoid(cfg_.mode == DiscriminatorMode::Image ? fc_(h) : patch_head_(h));
  return out;
}

template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace fh
