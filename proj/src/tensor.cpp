#include "fh/tensor.hpp"

#include <algorithm>

namespace fh {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w) + "]";
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (!(a == b)) throw ShapeError(what + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <class T>
Tensor<T> stack_samples(std::span<const Tensor<T>> samples) {
  if (samples.empty()) throw ShapeError("stack_samples: empty input");
  Shape s = samples.front().shape();
  if (s.n != 1) throw ShapeError("stack_samples: expected single samples, got " + s.str());
  Tensor<T> out(Shape{static_cast<int>(samples.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_same_shape(samples[i].shape(), s, "stack_samples");
    std::copy(samples[i].data(), samples[i].data() + s.numel(),
              out.sample(static_cast<int>(i)));
  }
  return out;
}

template <class T>
Tensor<T> slice_sample(const Tensor<T>& batch, int n) {
  const Shape& s = batch.shape();
  if (n < 0 || n >= s.n) throw ShapeError("slice_sample: index out of range for " + s.str());
  Tensor<T> out(Shape{1, s.c, s.h, s.w});
  std::copy(batch.sample(n), batch.sample(n) + s.sample(), out.data());
  return out;
}

template Tensor<float> stack_samples(std::span<const Tensor<float>>);
template Tensor<double> stack_samples(std::span<const Tensor<double>>);
template Tensor<float> slice_sample(const Tensor<float>&, int);
template Tensor<double> slice_sample(const Tensor<double>&, int);

}  // namespace fh
