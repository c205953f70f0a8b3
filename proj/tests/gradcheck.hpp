#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fh/autograd.hpp"
#include "fh/rng.hpp"

namespace fh::testing {

struct GradCheckResult {
  double worst = 0;
  std::string worst_name;
};

/// Compares backprop gradients against central differences, tensor by tensor,
/// for several losses at once. losses_fn builds every loss from one forward
/// pass; each perturbation is evaluated once for all of them.
/// The error of one tensor is |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)
/// in the Euclidean norm; tensors whose gradients both vanish count as exact.
inline std::vector<GradCheckResult> check_gradients_multi(
    const std::vector<std::pair<std::string, ag::Var<double>>>& inputs,
    const std::function<std::vector<ag::Var<double>>()>& losses_fn, double h = 1e-6) {
  const std::size_t count = losses_fn().size();
  std::vector<std::vector<Tensor<double>>> analytic(count);
  for (std::size_t k = 0; k < count; ++k) {
    for (const auto& [name, v] : inputs) v.node()->grad = Tensor<double>();
    ag::backward(losses_fn()[k]);
    for (const auto& [name, v] : inputs)
      analytic[k].push_back(v.grad().empty() ? Tensor<double>(v.node()->value.shape()) : v.grad());
  }

  auto values = [&] {
    ag::NoGradGuard guard;
    std::vector<double> out;
    for (const auto& l : losses_fn()) out.push_back(l.item());
    return out;
  };
  std::vector<GradCheckResult> results(count);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& value = inputs[t].second.node()->value;
    std::vector<double> diff2(count), a2(count), n2(count);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const auto plus = values();
      value[i] = saved - h;
      const auto minus = values();
      value[i] = saved;
      for (std::size_t k = 0; k < count; ++k) {
        const double numeric = (plus[k] - minus[k]) / (2 * h);
        const double a = analytic[k][t][i];
        diff2[k] += (a - numeric) * (a - numeric);
        a2[k] += a * a;
        n2[k] += numeric * numeric;
      }
    }
    for (std::size_t k = 0; k < count; ++k) {
      const double denom = std::sqrt(std::max(a2[k], n2[k]));
      const double err = denom == 0 ? 0 : std::sqrt(diff2[k]) / denom;
      if (err > results[k].worst) {
        results[k].worst = err;
        results[k].worst_name = inputs[t].first;
      }
    }
  }
  return results;
}

inline GradCheckResult check_gradients(
    const std::vector<std::pair<std::string, ag::Var<double>>>& inputs,
    const std::function<ag::Var<double>()>& loss_fn, double h = 1e-6) {
  return check_gradients_multi(inputs, [&] { return std::vector<ag::Var<double>>{loss_fn()}; }, h)[0];
}

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline ag::Var<double> leaf(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  return ag::Var<double>(random_tensor(s, rng, lo, hi), true);
}

}  // namespace fh::testing
