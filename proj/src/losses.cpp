#include "fh/losses.hpp"

#include <cmath>

#include "fh/errors.hpp"

namespace fh {

void LossWeights::validate(std::size_t tap_count) const {
  if (lambda_per_tap.size() != tap_count)
    throw ConfigError("loss weights: " + std::to_string(lambda_per_tap.size()) +
                      " lambdas for " + std::to_string(tap_count) + " discriminator taps");
}

template <class T>
ag::Var<T> lsgan_d_loss(const ag::Var<T>& real_prob, const ag::Var<T>& fake_prob,
                        const LsganTargets& targets) {
  return ag::weighted_sum<T>({{T(0.5), ag::mean_squared_to(real_prob, static_cast<T>(targets.b))},
                              {T(0.5), ag::mean_squared_to(fake_prob, static_cast<T>(targets.a))}});
}

template <class T>
ag::Var<T> lsgan_g_loss(const ag::Var<T>& fake_prob, const LsganTargets& targets) {
  return ag::scale(ag::mean_squared_to(fake_prob, static_cast<T>(targets.c)), T(0.5));
}

template <class T>
ag::Var<T> pixel_loss(const ag::Var<T>& generated, const ag::Var<T>& target, PixelNorm norm) {
  return norm == PixelNorm::L2 ? ag::mean_squared_error(generated, target)
                               : ag::mean_absolute_error(generated, target);
}

template <class T>
ag::Var<T> perceptual_loss(const FeatureTaps<T>& real, const FeatureTaps<T>& fake,
                           const std::vector<double>& lambda) {
  if (real.size() != fake.size())
    throw ShapeError("perceptual_loss: " + std::to_string(real.size()) + " real taps vs " +
                     std::to_string(fake.size()) + " fake taps");
  if (lambda.size() != real.size())
    throw ShapeError("perceptual_loss: " + std::to_string(lambda.size()) + " lambdas for " +
                     std::to_string(real.size()) + " taps");
  std::vector<std::pair<T, ag::Var<T>>> terms;
  for (std::size_t i = 0; i < real.size(); ++i) {
    require_same_shape(real.features[i].shape(), fake.features[i].shape(),
                       "perceptual_loss tap " + std::to_string(i));
    terms.emplace_back(static_cast<T>(lambda[i]),
                       ag::mean_absolute_error(real.features[i], fake.features[i]));
  }
  return ag::weighted_sum(terms);
}

template <class T>
GeneratorObjective<T> generator_total(const LossParts<T>& parts, const LossWeights& weights) {
  GeneratorObjective<T> out;
  out.breakdown.adversarial = static_cast<double>(parts.adversarial.item());
  out.breakdown.pixel = static_cast<double>(parts.pixel.item());
  out.breakdown.perceptual = static_cast<double>(parts.perceptual.item());
  if (!std::isfinite(out.breakdown.adversarial)) throw TrainingDivergence("adversarial");
  if (!std::isfinite(out.breakdown.pixel)) throw TrainingDivergence("pixel");
  if (!std::isfinite(out.breakdown.perceptual)) throw TrainingDivergence("perceptual");

  std::vector<std::pair<T, ag::Var<T>>> terms;
  if (weights.alpha_perceptual != 0.0)
    terms.emplace_back(static_cast<T>(weights.alpha_perceptual), parts.perceptual);
  if (weights.alpha_pixel != 0.0)
    terms.emplace_back(static_cast<T>(weights.alpha_pixel), parts.pixel);
  if (weights.alpha_adv != 0.0)
    terms.emplace_back(static_cast<T>(weights.alpha_adv), parts.adversarial);
  out.total = terms.empty() ? ag::constant(Tensor<T>::scalar(T(0))) : ag::weighted_sum(terms);
  out.breakdown.total = static_cast<double>(out.total.item());
  if (!std::isfinite(out.breakdown.total)) throw TrainingDivergence("total");
  return out;
}

template <class T>
ag::Var<T> discriminator_total(const ag::Var<T>& lsgan_d, const ag::Var<T>& perceptual,
                               double weight, PerceptualSign sign) {
  if (weight == 0.0) return lsgan_d;
  const double signed_weight = sign == PerceptualSign::MaximizeDiscrepancy ? -weight : weight;
  return ag::weighted_sum<T>({{T(1), lsgan_d}, {static_cast<T>(signed_weight), perceptual}});
}

#define FH_LOSS_INSTANTIATE(T)                                                                   \
  template ag::Var<T> lsgan_d_loss<T>(const ag::Var<T>&, const ag::Var<T>&,                      \
                                      const LsganTargets&);                                      \
  template ag::Var<T> lsgan_g_loss<T>(const ag::Var<T>&, const LsganTargets&);                   \
  template ag::Var<T> pixel_loss<T>(const ag::Var<T>&, const ag::Var<T>&, PixelNorm);            \
  template ag::Var<T> perceptual_loss<T>(const FeatureTaps<T>&, const FeatureTaps<T>&,           \
                                         const std::vector<double>&);                            \
  template GeneratorObjective<T> generator_total<T>(const LossParts<T>&, const LossWeights&);    \
  template ag::Var<T> discriminator_total<T>(const ag::Var<T>&, const ag::Var<T>&, double,       \
                                             PerceptualSign);

FH_LOSS_INSTANTIATE(float)
FH_LOSS_INSTANTIATE(double)

}  // namespace fh
