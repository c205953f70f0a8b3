#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fh/codec.hpp"
#include "fh/data.hpp"
#include "fh/discriminator.hpp"
#include "fh/generator.hpp"
#include "fh/image.hpp"

namespace fh {

// All metrics take images with values in [0, 1].

double mse(const RgbImage& a, const RgbImage& b);

/// 10 log10(max^2 / mse), or cap_db when the images are identical.
double psnr(const RgbImage& a, const RgbImage& b, double max_value = 1.0, double cap_db = 100.0);
double psnr_from_mse(double mse, double max_value = 1.0, double cap_db = 100.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Gaussian-window SSIM over every valid window position, per channel, then
/// averaged over channels. Throws ShapeError if the image is smaller than the window.
double ssim(const RgbImage& a, const RgbImage& b, const SsimOptions& opts = {});

/// Normalised 1-D Gaussian weights.
std::vector<double> gaussian_window(int size, double sigma);

/// Sum over taps of the squared L2 distance between the two tap sets for one
/// sample, each divided by the tap's element count.
double tap_distance(const FeatureTaps<float>& a, const FeatureTaps<float>& b, std::size_t sample);

/// Discriminator-feature perceptual distance d(y, y_hat, x) with a frozen,
/// explicitly loaded discriminator.
class LpipsModel {
 public:
  /// Throws CheckpointError if the checkpoint does not exist.
  static LpipsModel load(const std::string& checkpoint);
  LpipsModel(Discriminator<float> disc, std::string digest);

  double distance(const RgbImage& y, const RgbImage& y_hat, const RgbImage& x);
  const std::string& checkpoint_digest() const { return digest_; }
  Discriminator<float>& discriminator() { return disc_; }

 private:
  Discriminator<float> disc_;
  std::string digest_;
};

struct SampleMetrics {
  std::string id;
  double ssim = 0;
  double psnr = 0;
  double mse = 0;
  double lpips = 0;
  double mae_um = 0;
  bool operator==(const SampleMetrics&) const = default;
};

struct MetricReport {
  double ssim = 0;
  double psnr_db = 0;
  double mse = 0;
  double lpips = 0;
  /// Mean absolute height error after decoding both images.
  double mae_um = 0;
  long n_samples = 0;
  std::vector<SampleMetrics> per_sample;
  /// Checkpoint and colour map digests, seed and the like.
  nlohmann::json provenance = nlohmann::json::object();
  bool operator==(const MetricReport&) const = default;
};

using Predictor = std::function<RgbImage(const SamplePair&)>;

/// Metrics of predictor(sample) against sample.target for every sample, and
/// their means. Throws DataError on an empty set.
MetricReport evaluate(const std::vector<SamplePair>& samples, const Predictor& predict, LpipsModel& lpips,
                      const ColorMap& cmap);

/// Eval-mode generator output for one sample.
Predictor generator_predictor(Generator<float>& gen);

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

/// Writes <stem>.json (aggregates, provenance and rows) and <stem>.csv
/// (id,ssim,psnr,mse,lpips,mae_um).
void write_report(const std::string& stem, const MetricReport& r);
/// Aggregates and provenance from the JSON, rows from the CSV.
MetricReport read_report(const std::string& stem);

}  // namespace fh
