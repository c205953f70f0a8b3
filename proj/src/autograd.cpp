#include "fh/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "fh/kernels.hpp"
#include "fh/rng.hpp"

namespace fh::ag {
namespace {

thread_local bool g_grad_enabled = true;

constexpr std::size_t kParallelThreshold = 1 << 14;

// Builds the result node; records inputs and the backward closure only when a
// gradient is needed.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<const Var<T>*> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool record = false;
  if (g_grad_enabled)
    for (const Var<T>* v : inputs)
      if (v->defined() && v->requires_grad()) record = true;
  if (record) {
    node->requires_grad = true;
    for (const Var<T>* v : inputs) node->inputs.push_back(v->defined() ? v->node() : nullptr);
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

// Sum of term(0..n-1) in double over eight interleaved partial sums that are
// combined pairwise, so the order is fixed and the dependency chains are short.
template <class F>
double ordered_sum(std::size_t n, F&& term) {
  double part[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) part[l] += term(i + l);
  for (int l = 0; i < n; ++i, ++l) part[l] += term(i);
  return ((part[0] + part[1]) + (part[2] + part[3])) + ((part[4] + part[5]) + (part[6] + part[7]));
}

template <class T>
void add_into(T* __restrict dst, const T* __restrict src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

// Runs compute(out) into the input's gradient directly when it has none yet,
// otherwise into a scratch tensor that is then added.
template <class T, class F>
void accumulate_grad(Node<T>& input, F&& compute) {
  if (input.grad.empty()) {
    input.grad = Tensor<T>(input.value.shape());
    compute(input.grad.span());
    return;
  }
  Tensor<T> tmp(input.value.shape());
  compute(tmp.span());
  add_into(input.grad.data(), tmp.data(), tmp.size());
}

template <class T>
bool wants(const std::shared_ptr<Node<T>>& n) {
  return n && n->requires_grad;
}

template <class T>
void require_scalar_like(const Var<T>& a, const Var<T>& b, const char* what) {
  require_same_shape(a.shape(), b.shape(), what);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1)
    throw ShapeError("backward: root must be a scalar, got " + root.shape().str());
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

template <class T>
Var<T> detach(const Var<T>& x) {
  return Var<T>(x.value(), false);
}

// --- layers -------------------------------------------------------------------

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  if (ws.c != xs.c || ws.h != ws.w)
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  kernels::ConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, stride, pad};
  if (g.out_h() <= 0 || g.out_w() <= 0)
    throw ShapeError("conv2d: input " + xs.str() + " too small for kernel");
  Tensor<T> y(Shape{xs.n, ws.n, g.out_h(), g.out_w()});
  std::span<const T> bias = b.defined() ? b.value().span() : std::span<const T>{};
  kernels::parallel::conv2d_forward<T>(g, x.value().span(), w.value().span(), bias, y.span());
  return make_result<T>(std::move(y), {&x, &w, &b}, [g](Node<T>& self) {
    auto& in = self.inputs;
    if (wants(in[0]))
      accumulate_grad(*in[0], [&](std::span<T> dx) {
        kernels::parallel::conv2d_backward_data<T>(g, self.grad.span(), in[1]->value.span(), dx);
      });
    if (wants(in[1]) || wants(in[2])) {
      Tensor<T> dw(in[1]->value.shape());
      Tensor<T> db(in[2] ? in[2]->value.shape() : Shape{0, 0, 0, 0});
      kernels::parallel::conv2d_backward_weights<T>(g, in[0]->value.span(), self.grad.span(),
                                                    dw.span(), db.span());
      if (wants(in[1])) {
        add_into(in[1]->grad_buffer().data(), dw.data(), dw.size());
      }
      if (wants(in[2])) {
        add_into(in[2]->grad_buffer().data(), db.data(), db.size());
      }
    }
  });
}

template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride,
                        int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  if (ws.n != xs.c || ws.h != ws.w)
    throw ShapeError("conv_transpose2d: weight " + ws.str() + " incompatible with input " +
                     xs.str());
  kernels::TransposedConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.c, ws.h, stride, pad};
  Tensor<T> y(Shape{xs.n, ws.c, g.out_h(), g.out_w()});
  std::span<const T> bias = b.defined() ? b.value().span() : std::span<const T>{};
  kernels::parallel::conv_transpose2d_forward<T>(g, x.value().span(), w.value().span(), bias,
                                                 y.span());
  return make_result<T>(std::move(y), {&x, &w, &b}, [g](Node<T>& self) {
    auto& in = self.inputs;
    if (wants(in[0]))
      accumulate_grad(*in[0], [&](std::span<T> dx) {
        kernels::parallel::conv_transpose2d_backward_data<T>(g, self.grad.span(),
                                                             in[1]->value.span(), dx);
      });
    if (wants(in[1]) || wants(in[2])) {
      Tensor<T> dw(in[1]->value.shape());
      Tensor<T> db(in[2] ? in[2]->value.shape() : Shape{0, 0, 0, 0});
      kernels::parallel::conv_transpose2d_backward_weights<T>(
          g, in[0]->value.span(), self.grad.span(), dw.span(), db.span());
      if (wants(in[1])) {
        add_into(in[1]->grad_buffer().data(), dw.data(), dw.size());
      }
      if (wants(in[2])) {
        add_into(in[2]->grad_buffer().data(), db.data(), db.size());
      }
    }
  });
}

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                  T eps) {
  const Shape s = x.shape();
  const int channels = s.c;
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  if (gamma.value().size() != static_cast<std::size_t>(channels))
    throw ShapeError("batch_norm: gamma size does not match channels of " + s.str());

  Tensor<T> xhat(s);
  Tensor<T> y(s);
  std::vector<T> inv_std(channels);
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();

#pragma omp parallel for schedule(static) if (s.numel() > kParallelThreshold)
  for (int c = 0; c < channels; ++c) {
    T mean, var;
    if (training) {
      double sum = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* row = xv + (static_cast<std::size_t>(n) * channels + c) * plane;
        sum += ordered_sum(plane, [row](std::size_t p) { return static_cast<double>(row[p]); });
      }
      const double m = sum / static_cast<double>(count);
      double sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* row = xv + (static_cast<std::size_t>(n) * channels + c) * plane;
        sq += ordered_sum(plane, [row, m](std::size_t p) {
          const double d = row[p] - m;
          return d * d;
        });
      }
      mean = static_cast<T>(m);
      var = static_cast<T>(sq / static_cast<double>(count));
      const T unbiased =
          count > 1 ? static_cast<T>(sq / static_cast<double>(count - 1)) : var;
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const T istd = T(1) / std::sqrt(var + eps);
    inv_std[c] = istd;
    const T gc = gv[c], bc = bv[c];
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
      const T* __restrict xr = xv + off;
      T* __restrict hr = xhat.data() + off;
      T* __restrict yr = y.data() + off;
      for (std::size_t p = 0; p < plane; ++p) {
        const T h = (xr[p] - mean) * istd;
        hr[p] = h;
        yr[p] = gc * h + bc;
      }
    }
  }

  return make_result<T>(
      std::move(y), {&x, &gamma, &beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), training, s, count](Node<T>& self) {
        auto& in = self.inputs;
        const int channels = s.c;
        const std::size_t plane = s.plane();
        const T* dy = self.grad.data();
        const T* g = in[1]->value.data();
        T* dx = wants(in[0]) ? in[0]->grad_buffer().data() : nullptr;
        T* dg = wants(in[1]) ? in[1]->grad_buffer().data() : nullptr;
        T* db = wants(in[2]) ? in[2]->grad_buffer().data() : nullptr;
#pragma omp parallel for schedule(static) if (s.numel() > kParallelThreshold)
        for (int c = 0; c < channels; ++c) {
          const T* hv = xhat.data();
          double sum_dy = 0, sum_dy_xhat = 0;
          for (int n = 0; n < s.n; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
            const T* dr = dy + off;
            const T* hr = hv + off;
            sum_dy += ordered_sum(plane, [dr](std::size_t p) { return static_cast<double>(dr[p]); });
            sum_dy_xhat += ordered_sum(plane, [dr, hr](std::size_t p) {
              return static_cast<double>(dr[p]) * hr[p];
            });
          }
          if (dg) dg[c] += static_cast<T>(sum_dy_xhat);
          if (db) db[c] += static_cast<T>(sum_dy);
          if (!dx) continue;
          const T scale = g[c] * inv_std[c];
          if (training) {
            const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(count));
            const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(count));
            for (int n = 0; n < s.n; ++n) {
              const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
              T* __restrict dr = dx + off;
              const T* __restrict gr = dy + off;
              const T* __restrict hr = hv + off;
              for (std::size_t p = 0; p < plane; ++p)
                dr[p] += scale * (gr[p] - mean_dy - hr[p] * mean_dy_xhat);
            }
          } else {
            for (int n = 0; n < s.n; ++n) {
              const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
              for (std::size_t p = 0; p < plane; ++p) dx[off + p] += scale * dy[off + p];
            }
          }
        }
      });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Shape xs = x.shape(), ws = w.shape();
  const int features = static_cast<int>(xs.sample());
  const int outputs = ws.n;
  if (static_cast<std::size_t>(features) != ws.sample())
    throw ShapeError("linear: weight " + ws.str() + " incompatible with input " + xs.str());
  Tensor<T> y(Shape{xs.n, outputs, 1, 1});
  // y[n, o] = sum_f x[n, f] w[o, f] + b[o]
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < outputs; ++o) {
      T acc = b.defined() ? b.value()[o] : T(0);
      const T* xr = xv + static_cast<std::size_t>(n) * features;
      const T* wr = wv + static_cast<std::size_t>(o) * features;
      for (int f = 0; f < features; ++f) acc += xr[f] * wr[f];
      y[static_cast<std::size_t>(n) * outputs + o] = acc;
    }
  return make_result<T>(std::move(y), {&x, &w, &b}, [features, outputs](Node<T>& self) {
    auto& in = self.inputs;
    const int batch = in[0]->value.shape().n;
    const T* dy = self.grad.data();
    if (wants(in[0])) {
      T* dx = in[0]->grad_buffer().data();
      const T* wv = in[1]->value.data();
      for (int n = 0; n < batch; ++n)
        for (int o = 0; o < outputs; ++o) {
          const T g = dy[n * outputs + o];
          T* dr = dx + static_cast<std::size_t>(n) * features;
          const T* wr = wv + static_cast<std::size_t>(o) * features;
          for (int f = 0; f < features; ++f) dr[f] += g * wr[f];
        }
    }
    if (wants(in[1])) {
      T* dw = in[1]->grad_buffer().data();
      const T* xv = in[0]->value.data();
      for (int n = 0; n < batch; ++n)
        for (int o = 0; o < outputs; ++o) {
          const T g = dy[n * outputs + o];
          T* dr = dw + static_cast<std::size_t>(o) * features;
          const T* xr = xv + static_cast<std::size_t>(n) * features;
          for (int f = 0; f < features; ++f) dr[f] += g * xr[f];
        }
    }
    if (wants(in[2])) {
      T* db = in[2]->grad_buffer().data();
      for (int n = 0; n < batch; ++n)
        for (int o = 0; o < outputs; ++o) db[o] += dy[n * outputs + o];
    }
  });
}

// --- elementwise --------------------------------------------------------------

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> y(x.shape());
  const std::size_t n = y.size();
  {
    const T* __restrict xv = x.value().data();
    T* __restrict yv = y.data();
    for (std::size_t i = 0; i < n; ++i) yv[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
  }
  return make_result<T>(std::move(y), {&x}, [slope](Node<T>& self) {
    const T* __restrict xv = self.inputs[0]->value.data();
    const T* __restrict g = self.grad.data();
    T* __restrict dx = self.inputs[0]->grad_buffer().data();
    const std::size_t n = self.grad.size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += xv[i] > T(0) ? g[i] : slope * g[i];
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  const std::size_t n = xv.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-xv[i]));
  return make_result<T>(y, {&x}, [](Node<T>& self) {
    const Tensor<T>& yv = self.value;
    Tensor<T>& dx = self.inputs[0]->grad_buffer();
    const std::size_t n = yv.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[i] * yv[i] * (T(1) - yv[i]);
  });
}

template <class T>
Var<T> dropout(const Var<T>& x, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.size();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(xv.shape());
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = unit_from_bits(splitmix64(seed + i)) >= rate ? keep_scale : T(0);
    y[i] = xv[i] * mask[i];
  }
  return make_result<T>(std::move(y), {&x}, [mask = std::move(mask)](Node<T>& self) {
    Tensor<T>& dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += self.grad[i] * mask[i];
  });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape as = a.shape(), bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
    throw ShapeError("concat_channels: " + as.str() + " vs " + bs.str());
  Tensor<T> y(Shape{as.n, as.c + bs.c, as.h, as.w});
  for (int n = 0; n < as.n; ++n) {
    std::copy(a.value().sample(n), a.value().sample(n) + as.sample(), y.sample(n));
    std::copy(b.value().sample(n), b.value().sample(n) + bs.sample(), y.sample(n) + as.sample());
  }
  return make_result<T>(std::move(y), {&a, &b}, [as, bs](Node<T>& self) {
    auto& in = self.inputs;
    for (int n = 0; n < as.n; ++n) {
      const T* g = self.grad.sample(n);
      if (wants(in[0])) add_into(in[0]->grad_buffer().sample(n), g, as.sample());
      if (wants(in[1])) add_into(in[1]->grad_buffer().sample(n), g + as.sample(), bs.sample());
    }
  });
}

template <class T>
Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms) {
  if (terms.empty()) throw std::invalid_argument("weighted_sum: no terms");
  const Shape s = terms.front().second.shape();
  Tensor<T> y(s);
  std::vector<const Var<T>*> inputs;
  std::vector<T> weights;
  for (const auto& [w, v] : terms) {
    require_same_shape(v.shape(), s, "weighted_sum");
    T* __restrict yv = y.data();
    const T* __restrict vv = v.value().data();
    for (std::size_t i = 0; i < y.size(); ++i) yv[i] += w * vv[i];
    inputs.push_back(&v);
    weights.push_back(w);
  }
  return make_result<T>(std::move(y), inputs, [weights](Node<T>& self) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      auto& in = self.inputs[k];
      if (!wants(in)) continue;
      T* __restrict d = in->grad_buffer().data();
      const T* __restrict g = self.grad.data();
      const T w = weights[k];
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += w * g[i];
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return weighted_sum<T>({{T(1), a}, {T(1), b}});
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return weighted_sum<T>({{T(1), a}, {T(-1), b}});
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return weighted_sum<T>({{s, a}});
}

template <class T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty list");
  const Shape s = xs.front().shape();
  Tensor<T> y(s);
  std::vector<const Var<T>*> inputs;
  for (const auto& v : xs) {
    require_same_shape(v.shape(), s, "mean_of");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += v.value()[i];
    inputs.push_back(&v);
  }
  const T count = static_cast<T>(xs.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= count;
  return make_result<T>(std::move(y), inputs, [count](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!wants(in)) continue;
      Tensor<T>& d = in->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] / count;
    }
  });
}

template <class T>
Var<T> max_of(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("max_of: empty list");
  const Shape s = xs.front().shape();
  Tensor<T> y = xs.front().value();
  std::vector<int> argmax(y.size(), 0);
  std::vector<const Var<T>*> inputs{&xs.front()};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_shape(xs[k].shape(), s, "max_of");
    for (std::size_t i = 0; i < y.size(); ++i)
      if (xs[k].value()[i] > y[i]) {
        y[i] = xs[k].value()[i];
        argmax[i] = static_cast<int>(k);
      }
    inputs.push_back(&xs[k]);
  }
  return make_result<T>(std::move(y), inputs, [argmax = std::move(argmax)](Node<T>& self) {
    for (std::size_t i = 0; i < argmax.size(); ++i) {
      auto& in = self.inputs[argmax[i]];
      if (wants(in)) in->grad_buffer()[i] += self.grad[i];
    }
  });
}

// --- reductions ---------------------------------------------------------------

template <class T>
Var<T> mean_squared_error(const Var<T>& a, const Var<T>& b) {
  require_scalar_like(a, b, "mean_squared_error");
  const std::size_t n = a.value().size();
  const T* av = a.value().data();
  const T* bv = b.value().data();
  const double acc = ordered_sum(n, [av, bv](std::size_t i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    return d * d;
  });
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(acc / n)), {&a, &b},
                        [](Node<T>& self) {
                          auto& in = self.inputs;
                          const std::size_t n = in[0]->value.size();
                          const T g = self.grad[0] * T(2) / static_cast<T>(n);
                          for (int k = 0; k < 2; ++k) {
                            if (!wants(in[k])) continue;
                            const T sign = k == 0 ? T(1) : T(-1);
                            T* __restrict d = in[k]->grad_buffer().data();
                            const T* __restrict av = in[0]->value.data();
                            const T* __restrict bv = in[1]->value.data();
                            const T sg = sign * g;
                            for (std::size_t i = 0; i < n; ++i) d[i] += sg * (av[i] - bv[i]);
                          }
                        });
}

template <class T>
Var<T> mean_absolute_error(const Var<T>& a, const Var<T>& b) {
  require_scalar_like(a, b, "mean_absolute_error");
  const std::size_t n = a.value().size();
  const T* av = a.value().data();
  const T* bv = b.value().data();
  const double acc = ordered_sum(
      n, [av, bv](std::size_t i) { return std::abs(static_cast<double>(av[i]) - bv[i]); });
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(acc / n)), {&a, &b},
                        [](Node<T>& self) {
                          auto& in = self.inputs;
                          const std::size_t n = in[0]->value.size();
                          const T g = self.grad[0] / static_cast<T>(n);
                          for (int k = 0; k < 2; ++k) {
                            if (!wants(in[k])) continue;
                            const T sign = k == 0 ? T(1) : T(-1);
                            T* __restrict d = in[k]->grad_buffer().data();
                            const T* __restrict av = in[0]->value.data();
                            const T* __restrict bv = in[1]->value.data();
                            const T sg = sign * g;
                            for (std::size_t i = 0; i < n; ++i) {
                              const T diff = av[i] - bv[i];
                              const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
                              d[i] += sg * sgn;
                            }
                          }
                        });
}

template <class T>
Var<T> mean_squared_to(const Var<T>& x, T target) {
  const std::size_t n = x.value().size();
  const T* xv = x.value().data();
  const double acc = ordered_sum(n, [xv, target](std::size_t i) {
    const double d = static_cast<double>(xv[i]) - target;
    return d * d;
  });
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(acc / n)), {&x},
                        [target](Node<T>& self) {
                          const Tensor<T>& xv = self.inputs[0]->value;
                          T* __restrict d = self.inputs[0]->grad_buffer().data();
                          const T* __restrict x = xv.data();
                          const T g = self.grad[0] * T(2) / static_cast<T>(xv.size());
                          for (std::size_t i = 0; i < xv.size(); ++i) d[i] += g * (x[i] - target);
                        });
}

#define FH_AG_INSTANTIATE(T)                                                                  \
  template void backward<T>(const Var<T>&);                                                   \
  template Var<T> detach<T>(const Var<T>&);                                                   \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);           \
  template Var<T> conv_transpose2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int); \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&,     \
                                Tensor<T>&, bool, T, T);                                      \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                     \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                            \
  template Var<T> sigmoid<T>(const Var<T>&);                                                  \
  template Var<T> dropout<T>(const Var<T>&, double, std::uint64_t);                           \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale<T>(const Var<T>&, T);                                                 \
  template Var<T> weighted_sum<T>(const std::vector<std::pair<T, Var<T>>>&);                  \
  template Var<T> mean_of<T>(const std::vector<Var<T>>&);                                     \
  template Var<T> max_of<T>(const std::vector<Var<T>>&);                                      \
  template Var<T> mean_squared_error<T>(const Var<T>&, const Var<T>&);                        \
  template Var<T> mean_absolute_error<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> mean_squared_to<T>(const Var<T>&, T);

FH_AG_INSTANTIATE(float)
FH_AG_INSTANTIATE(double)

}  // namespace fh::ag
