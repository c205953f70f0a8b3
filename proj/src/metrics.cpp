#include "fh/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fh/errors.hpp"
#include "fh/trainer.hpp"

namespace fh {

using nlohmann::json;

namespace {

void require_same(const RgbImage& a, const RgbImage& b, const char* what) {
  if (!a.same_size(b) || a.pixels.size() != b.pixels.size())
    throw ShapeError(std::string(what) + ": images differ in size (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                     ")");
}

// Valid-mode separable filtering of one channel: rows, then columns.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * img[static_cast<std::size_t>(r) * w + c + i];
      rows[static_cast<std::size_t>(r) * ow + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * rows[static_cast<std::size_t>(r + i) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = s;
    }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double mse(const RgbImage& a, const RgbImage& b) {
  require_same(a, b, "mse");
  if (a.pixels.empty()) throw ShapeError("mse: empty image");
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(a.pixels.size());
}

double psnr_from_mse(double m, double max_value, double cap_db) {
  if (m <= 0) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(max_value * max_value / m));
}

double psnr(const RgbImage& a, const RgbImage& b, double max_value, double cap_db) {
  return psnr_from_mse(mse(a, b), max_value, cap_db);
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> k(size);
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double x = i - (size - 1) / 2.0;
    k[i] = std::exp(-x * x / (2 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

double ssim(const RgbImage& a, const RgbImage& b, const SsimOptions& opts) {
  require_same(a, b, "ssim");
  if (a.height < opts.window || a.width < opts.window)
    throw ShapeError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " is smaller than the " + std::to_string(opts.window) + "x" + std::to_string(opts.window) +
                     " window");
  const auto k = gaussian_window(opts.window, opts.sigma);
  const double c1 = std::pow(opts.k1 * opts.data_range, 2), c2 = std::pow(opts.k2 * opts.data_range, 2);
  const int h = a.height, w = a.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.pixels[i * 3 + ch];
      y[i] = b.pixels[i * 3 + ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
    double s = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      s += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

double tap_distance(const FeatureTaps<float>& a, const FeatureTaps<float>& b, std::size_t sample) {
  if (a.size() != b.size()) throw ShapeError("tap_distance: tap counts differ");
  double d = 0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const Tensor<float>& ta = a.features[l].value();
    const Tensor<float>& tb = b.features[l].value();
    if (ta.shape() != tb.shape()) throw ShapeError("tap_distance: tap " + std::to_string(l) + " shapes differ");
    const std::size_t per = ta.shape().sample();
    const std::size_t off = sample * per;
    double s = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const double diff = static_cast<double>(ta[off + i]) - tb[off + i];
      s += diff * diff;
    }
    d += s / static_cast<double>(per);
  }
  return d;
}

LpipsModel LpipsModel::load(const std::string& checkpoint) {
  if (checkpoint.empty()) throw CheckpointError("lpips: no discriminator checkpoint given", {});
  if (!std::filesystem::exists(checkpoint))
    throw CheckpointError("lpips: discriminator checkpoint not found: " + checkpoint, {});
  return LpipsModel(load_discriminator(checkpoint), fh::checkpoint_digest(checkpoint));
}

LpipsModel::LpipsModel(Discriminator<float> disc, std::string digest)
    : disc_(std::move(disc)), digest_(std::move(digest)) {}

double LpipsModel::distance(const RgbImage& y, const RgbImage& y_hat, const RgbImage& x) {
  require_same(y, y_hat, "lpips");
  require_same(y, x, "lpips");
  ag::NoGradGuard no_grad;
  const auto xt = ag::constant(to_tensor<float>(std::vector<RgbImage>{x}));
  const auto a = disc_.forward(xt, ag::constant(to_tensor<float>(std::vector<RgbImage>{y})), Mode::Eval);
  const auto b = disc_.forward(xt, ag::constant(to_tensor<float>(std::vector<RgbImage>{y_hat})), Mode::Eval);
  return tap_distance(a.taps, b.taps, 0);
}

Predictor generator_predictor(Generator<float>& gen) {
  return [&gen](const SamplePair& s) {
    ag::NoGradGuard no_grad;
    const auto out = gen.forward(to_tensor<float>(std::vector<RgbImage>{s.fundus.pixels}), Mode::Eval);
    return from_tensor<float>(out.final.value(), 0);
  };
}

MetricReport evaluate(const std::vector<SamplePair>& samples, const Predictor& predict, LpipsModel& lpips,
                      const ColorMap& cmap) {
  if (samples.empty()) throw DataError("evaluate: empty test set");
  MetricReport r;
  for (const auto& s : samples) {
    RgbImage pred = predict(s);
    for (auto& v : pred.pixels) v = std::clamp(v, 0.0, 1.0);
    const RgbImage& truth = s.target.rgb;
    SampleMetrics m;
    m.id = s.id;
    m.mse = mse(pred, truth);
    m.psnr = psnr_from_mse(m.mse);
    m.ssim = ssim(pred, truth);
    m.lpips = lpips.distance(pred, truth, s.fundus.pixels);
    const auto hp = decode_height(pred, cmap), ht = decode_height(truth, cmap);
    double err = 0;
    for (std::size_t i = 0; i < hp.values.size(); ++i) err += std::abs(hp.values[i] - ht.values[i]);
    m.mae_um = err / static_cast<double>(hp.values.size());
    r.per_sample.push_back(std::move(m));
  }
  const double n = static_cast<double>(r.per_sample.size());
  for (const auto& m : r.per_sample) {
    r.ssim += m.ssim / n;
    r.psnr_db += m.psnr / n;
    r.mse += m.mse / n;
    r.lpips += m.lpips / n;
    r.mae_um += m.mae_um / n;
  }
  r.n_samples = static_cast<long>(r.per_sample.size());
  r.provenance["lpips_checkpoint_digest"] = lpips.checkpoint_digest();
  r.provenance["colormap_digest"] = colormap_digest(cmap);
  return r;
}

void to_json(json& j, const MetricReport& r) {
  j = {{"ssim", r.ssim},   {"psnr_db", r.psnr_db},     {"mse", r.mse},
       {"lpips", r.lpips}, {"mae_um", r.mae_um},       {"n_samples", r.n_samples},
       {"provenance", r.provenance}};
}

void from_json(const json& j, MetricReport& r) {
  j.at("ssim").get_to(r.ssim);
  j.at("psnr_db").get_to(r.psnr_db);
  j.at("mse").get_to(r.mse);
  j.at("lpips").get_to(r.lpips);
  j.at("mae_um").get_to(r.mae_um);
  j.at("n_samples").get_to(r.n_samples);
  r.provenance = j.value("provenance", json::object());
}

void write_report(const std::string& stem, const MetricReport& r) {
  if (const auto dir = std::filesystem::path(stem).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  std::ofstream js(stem + ".json");
  if (!js) throw DataError("cannot write " + stem + ".json");
  json j = r;
  js << j.dump(2) << '\n';
  std::ofstream csv(stem + ".csv");
  if (!csv) throw DataError("cannot write " + stem + ".csv");
  csv << "id,ssim,psnr,mse,lpips,mae_um\n";
  for (const auto& m : r.per_sample)
    csv << m.id << ',' << fmt(m.ssim) << ',' << fmt(m.psnr) << ',' << fmt(m.mse) << ',' << fmt(m.lpips) << ','
        << fmt(m.mae_um) << '\n';
}

MetricReport read_report(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw DataError("cannot read " + stem + ".json");
  MetricReport r;
  try {
    json::parse(js).get_to(r);
  } catch (const json::exception& e) {
    throw DataError(stem + ".json: " + e.what());
  }
  std::ifstream csv(stem + ".csv");
  if (!csv) throw DataError("cannot read " + stem + ".csv");
  std::string line;
  std::getline(csv, line);
  if (line != "id,ssim,psnr,mse,lpips,mae_um") throw DataError(stem + ".csv: unexpected header");
  for (int lineno = 2; std::getline(csv, line); ++lineno) {
    if (line.empty()) continue;
    std::istringstream in(line);
    SampleMetrics m;
    std::string field;
    std::getline(in, m.id, ',');
    double* dst[] = {&m.ssim, &m.psnr, &m.mse, &m.lpips, &m.mae_um};
    for (double* d : dst) {
      if (!std::getline(in, field, ',')) throw DataError(stem + ".csv line " + std::to_string(lineno) + ": too few fields");
      try {
        *d = std::stod(field);
      } catch (const std::exception&) {
        throw DataError(stem + ".csv line " + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    r.per_sample.push_back(std::move(m));
  }
  return r;
}

}  // namespace fh
