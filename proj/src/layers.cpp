#include "fh/layers.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fh {

template <class T>
ag::Var<T> ParameterStore<T>::add_parameter(const std::string& name, Tensor<T> init) {
  for (const auto& [n, _] : params_)
    if (n == name) throw std::logic_error("duplicate parameter name " + name);
  ag::Var<T> v(std::move(init), true);
  params_.emplace_back(name, v);
  return v;
}

template <class T>
std::shared_ptr<Tensor<T>> ParameterStore<T>::add_buffer(const std::string& name,
                                                         Tensor<T> init) {
  auto b = std::make_shared<Tensor<T>>(std::move(init));
  buffers_.emplace_back(name, b);
  return b;
}

template <class T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [_, v] : params_) total += v.value().size();
  return total;
}

template <class T>
void ParameterStore<T>::zero_grad() {
  for (auto& [_, v] : params_) {
    ag::Var<T> p = v;
    p.zero_grad();
  }
}

template <class T>
TensorMap<T> ParameterStore<T>::state() const {
  TensorMap<T> out;
  for (const auto& [n, v] : params_) out.emplace(n, v.value());
  for (const auto& [n, b] : buffers_) out.emplace(n, *b);
  return out;
}

template <class T>
std::vector<std::string> ParameterStore<T>::mismatches(const TensorMap<T>& state) const {
  std::vector<std::string> bad;
  std::map<std::string, Shape> mine;
  for (const auto& [n, v] : params_) mine.emplace(n, v.shape());
  for (const auto& [n, b] : buffers_) mine.emplace(n, b->shape());
  for (const auto& [n, s] : mine) {
    auto it = state.find(n);
    if (it == state.end() || !(it->second.shape() == s)) bad.push_back(n);
  }
  for (const auto& [n, _] : state)
    if (!mine.contains(n)) bad.push_back(n);
  return bad;
}

template <class T>
void ParameterStore<T>::load(const TensorMap<T>& state, const std::string& prefix) {
  std::vector<std::string> bad;
  std::vector<std::pair<Tensor<T>*, const Tensor<T>*>> copies;
  for (const auto& [full, tensor] : state) {
    if (full.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string name = full.substr(prefix.size());
    Tensor<T>* dst = nullptr;
    for (auto& [n, v] : params_)
      if (n == name) dst = &v.mutable_value();
    for (auto& [n, b] : buffers_)
      if (n == name) dst = b.get();
    if (!dst || !(dst->shape() == tensor.shape())) {
      bad.push_back(full);
      continue;
    }
    copies.emplace_back(dst, &tensor);
  }
  if (!bad.empty()) {
    std::string msg = "checkpoint does not match architecture:";
    for (const auto& n : bad) msg += " " + n;
    throw CheckpointError(msg, bad);
  }
  for (auto [dst, src] : copies) *dst = *src;
}

template <class T>
Tensor<T> fan_in_init(Shape shape, int fan_in, Rng& rng) {
  Tensor<T> t(shape);
  const double stddev = std::sqrt(2.0 / std::max(1, fan_in));
  for (auto& v : t.vec()) v = static_cast<T>(stddev * rng.truncated_normal());
  return t;
}

namespace layers {

template <class T>
Conv2d<T>::Conv2d(ParameterStore<T>& store, const std::string& name, int in, int out,
                  int kernel, int stride, int pad, bool bias, Rng& rng)
    : out_(out), stride_(stride), pad_(pad) {
  weight_ = store.add_parameter(name + ".weight",
                                fan_in_init<T>(Shape{out, in, kernel, kernel},
                                               in * kernel * kernel, rng));
  if (bias) bias_ = store.add_parameter(name + ".bias", Tensor<T>(Shape{out, 1, 1, 1}));
}

template <class T>
ag::Var<T> Conv2d<T>::operator()(const ag::Var<T>& x) const {
  return ag::conv2d(x, weight_, bias_, stride_, pad_);
}

template <class T>
ConvTranspose2d<T>::ConvTranspose2d(ParameterStore<T>& store, const std::string& name, int in,
                                    int out, int kernel, int stride, int pad, bool bias,
                                    Rng& rng)
    : stride_(stride), pad_(pad) {
  weight_ = store.add_parameter(name + ".weight",
                                fan_in_init<T>(Shape{in, out, kernel, kernel},
                                               in * kernel * kernel, rng));
  if (bias) bias_ = store.add_parameter(name + ".bias", Tensor<T>(Shape{out, 1, 1, 1}));
}

template <class T>
ag::Var<T> ConvTranspose2d<T>::operator()(const ag::Var<T>& x) const {
  return ag::conv_transpose2d(x, weight_, bias_, stride_, pad_);
}

template <class T>
BatchNorm2d<T>::BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels) {
  gamma_ = store.add_parameter(name + ".gamma", Tensor<T>(Shape{channels, 1, 1, 1}, T(1)));
  beta_ = store.add_parameter(name + ".beta", Tensor<T>(Shape{channels, 1, 1, 1}));
  running_mean_ = store.add_buffer(name + ".running_mean", Tensor<T>(Shape{channels, 1, 1, 1}));
  running_var_ =
      store.add_buffer(name + ".running_var", Tensor<T>(Shape{channels, 1, 1, 1}, T(1)));
}

template <class T>
ag::Var<T> BatchNorm2d<T>::operator()(const ag::Var<T>& x, Mode mode) const {
  return ag::batch_norm(x, gamma_, beta_, *running_mean_, *running_var_, mode == Mode::Train);
}

template <class T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, int in, int out,
                  Rng& rng) {
  weight_ = store.add_parameter(name + ".weight", fan_in_init<T>(Shape{out, in, 1, 1}, in, rng));
  bias_ = store.add_parameter(name + ".bias", Tensor<T>(Shape{out, 1, 1, 1}));
}

template <class T>
ag::Var<T> Linear<T>::operator()(const ag::Var<T>& x) const {
  return ag::linear(x, weight_, bias_);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace layers

// --- tensor map files -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'H', 'T', 'M', 'A', 'P', '0', '1'};

template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("truncated tensor map");
  return v;
}

}  // namespace

template <class T>
void save_tensor_map(const std::string& path, const TensorMap<T>& map) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(os, map.size());
  for (const auto& [name, t] : map) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, sizeof(T));
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(T)));
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

template <class T>
TensorMap<T> load_tensor_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + " is not a tensor map");
  const auto count = get<std::uint64_t>(is);
  TensorMap<T> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto dtype = get<std::uint32_t>(is);
    Shape s;
    s.n = get<std::int32_t>(is);
    s.c = get<std::int32_t>(is);
    s.h = get<std::int32_t>(is);
    s.w = get<std::int32_t>(is);
    Tensor<T> t(s);
    if (dtype == sizeof(float)) {
      std::vector<float> raw(s.numel());
      is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
      std::copy(raw.begin(), raw.end(), t.data());
    } else if (dtype == sizeof(double)) {
      std::vector<double> raw(s.numel());
      is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
      std::copy(raw.begin(), raw.end(), t.data());
    } else {
      throw std::runtime_error(path + ": unknown dtype for " + name);
    }
    if (!is) throw std::runtime_error(path + ": truncated at " + name);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

std::string bytes_digest(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return bytes_digest(bytes);
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> fan_in_init<float>(Shape, int, Rng&);
template Tensor<double> fan_in_init<double>(Shape, int, Rng&);
template void save_tensor_map<float>(const std::string&, const TensorMap<float>&);
template void save_tensor_map<double>(const std::string&, const TensorMap<double>&);
template TensorMap<float> load_tensor_map<float>(const std::string&);
template TensorMap<double> load_tensor_map<double>(const std::string&);

}  // namespace fh
