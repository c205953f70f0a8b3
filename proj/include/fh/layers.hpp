#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fh/autograd.hpp"
#include "fh/rng.hpp"
#include "fh/tensor.hpp"

namespace fh {

enum class Mode { Train, Eval };

template <class T>
using TensorMap = std::map<std::string, Tensor<T>>;

/// Raised when a parameter map does not match the architecture it is loaded into.
class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& what, std::vector<std::string> names)
      : std::runtime_error(what), names_(std::move(names)) {}
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

/// Named trainable parameters and non-trainable buffers (batch-norm running
/// statistics), in registration order.
template <class T>
class ParameterStore {
 public:
  ag::Var<T> add_parameter(const std::string& name, Tensor<T> init);
  std::shared_ptr<Tensor<T>> add_buffer(const std::string& name, Tensor<T> init);

  const std::vector<std::pair<std::string, ag::Var<T>>>& parameters() const { return params_; }
  const std::vector<std::pair<std::string, std::shared_ptr<Tensor<T>>>>& buffers() const {
    return buffers_;
  }

  /// Total number of trainable scalars.
  std::size_t parameter_count() const;
  void zero_grad();

  /// Parameters and buffers keyed by name.
  TensorMap<T> state() const;

  /// Copies every entry of `state` whose name starts with `prefix` into this
  /// store. Unknown names or shape mismatches raise CheckpointError.
  void load(const TensorMap<T>& state, const std::string& prefix = "");

  /// Names of this store that `state` lacks or holds with a different shape,
  /// plus names in `state` this store does not know.
  std::vector<std::string> mismatches(const TensorMap<T>& state) const;

 private:
  std::vector<std::pair<std::string, ag::Var<T>>> params_;
  std::vector<std::pair<std::string, std::shared_ptr<Tensor<T>>>> buffers_;
};

/// Truncated normal with std sqrt(2 / fan_in), clipped at two sigma.
template <class T>
Tensor<T> fan_in_init(Shape shape, int fan_in, Rng& rng);

namespace layers {

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, int in, int out, int kernel,
         int stride, int pad, bool bias, Rng& rng);
  ag::Var<T> operator()(const ag::Var<T>& x) const;
  int out_channels() const { return out_; }

 private:
  ag::Var<T> weight_, bias_;
  int out_ = 0, stride_ = 1, pad_ = 0;
};

template <class T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterStore<T>& store, const std::string& name, int in, int out, int kernel,
                  int stride, int pad, bool bias, Rng& rng);
  ag::Var<T> operator()(const ag::Var<T>& x) const;

 private:
  ag::Var<T> weight_, bias_;
  int stride_ = 2, pad_ = 1;
};

template <class T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels);
  ag::Var<T> operator()(const ag::Var<T>& x, Mode mode) const;

 private:
  ag::Var<T> gamma_, beta_;
  std::shared_ptr<Tensor<T>> running_mean_, running_var_;
};

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, int in, int out, Rng& rng);
  ag::Var<T> operator()(const ag::Var<T>& x) const;

 private:
  ag::Var<T> weight_, bias_;
};

}  // namespace layers

// --- tensor map files ---------------------------------------------------------

/// Writes a binary tensor map: magic, entry count, then per entry the name,
/// dtype tag (4 = float32, 8 = float64), NCHW dims and raw little-endian data.
template <class T>
void save_tensor_map(const std::string& path, const TensorMap<T>& map);

/// Reads a tensor map written by save_tensor_map, converting dtype if needed.
template <class T>
TensorMap<T> load_tensor_map(const std::string& path);

/// SHA-256 hex digest of a file's bytes.
std::string file_digest(const std::string& path);
/// SHA-256 hex digest of a byte string.
std::string bytes_digest(std::string_view bytes);

}  // namespace fh
