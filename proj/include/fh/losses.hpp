#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fh/autograd.hpp"
#include "fh/discriminator.hpp"

namespace fh {

enum class PixelNorm { L1, L2 };

/// Least-squares targets: a for fake under D, b for real under D, c for fake under G.
struct LsganTargets {
  double a = 0.0;
  double b = 1.0;
  double c = 1.0;
  bool operator==(const LsganTargets&) const = default;
};

/// How the discriminator treats its feature-matching term.
enum class PerceptualSign {
  /// D minimises -perceptual, i.e. pushes real and fake features apart.
  MaximizeDiscrepancy,
  /// D minimises +perceptual.
  MinimizeDiscrepancy,
};

struct LossWeights {
  double alpha_perceptual = 100.0;
  double alpha_pixel = 1.0;
  double alpha_adv = 50.0;
  std::vector<double> lambda_per_tap{5.0, 1.0, 5.0, 5.0};
  PixelNorm pixel_norm = PixelNorm::L2;
  LsganTargets lsgan;
  double d_perceptual_weight = 1.0;
  PerceptualSign d_perceptual_sign = PerceptualSign::MaximizeDiscrepancy;

  /// Throws ConfigError unless one lambda is given per discriminator tap.
  void validate(std::size_t tap_count) const;
  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double adversarial = 0;
  double pixel = 0;
  double perceptual = 0;
  double total = 0;
};

/// A loss term became NaN or infinite.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& term, std::vector<LossBreakdown> recent = {})
      : std::runtime_error("training diverged: non-finite " + term + " loss"),
        term_(term),
        recent_(std::move(recent)) {}
  const std::string& term() const { return term_; }
  const std::vector<LossBreakdown>& recent() const { return recent_; }
  void set_recent(std::vector<LossBreakdown> r) { recent_ = std::move(r); }

 private:
  std::string term_;
  std::vector<LossBreakdown> recent_;
};

/// 1/2 mean[(D(x,y) - b)^2] + 1/2 mean[(D(x,G(x)) - a)^2]
template <class T>
ag::Var<T> lsgan_d_loss(const ag::Var<T>& real_prob, const ag::Var<T>& fake_prob,
                        const LsganTargets& targets = {});

/// 1/2 mean[(D(x,G(x)) - c)^2]
template <class T>
ag::Var<T> lsgan_g_loss(const ag::Var<T>& fake_prob, const LsganTargets& targets = {});

/// Mean squared (L2) or absolute (L1) difference over all elements.
template <class T>
ag::Var<T> pixel_loss(const ag::Var<T>& generated, const ag::Var<T>& target, PixelNorm norm);

/// sum_i lambda_i * mean|D_i(x,y) - D_i(x,G(x))|. The mean runs over the
/// w_i*h_i*d_i elements of each tap and over the batch.
template <class T>
ag::Var<T> perceptual_loss(const FeatureTaps<T>& real, const FeatureTaps<T>& fake,
                           const std::vector<double>& lambda);

template <class T>
struct LossParts {
  ag::Var<T> adversarial;
  ag::Var<T> pixel;
  ag::Var<T> perceptual;
};

template <class T>
struct GeneratorObjective {
  ag::Var<T> total;
  LossBreakdown breakdown;
};

/// alpha_perceptual * perceptual + alpha_pixel * pixel + alpha_adv * adversarial.
/// Zero-weighted terms are left out of the graph. Throws TrainingDivergence
/// naming the first non-finite part.
template <class T>
GeneratorObjective<T> generator_total(const LossParts<T>& parts, const LossWeights& weights);

/// lsgan_d -/+ weight * perceptual, sign per `sign`.
template <class T>
ag::Var<T> discriminator_total(const ag::Var<T>& lsgan_d, const ag::Var<T>& perceptual,
                               double weight, PerceptualSign sign);

}  // namespace fh
