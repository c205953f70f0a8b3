#include "fh/data.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fh/errors.hpp"
#include "fh/rng.hpp"

namespace fh {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "unassigned";
}

std::string to_string(AugmentationTag t) {
  switch (t) {
    case AugmentationTag::HFlip: return "hflip";
    case AugmentationTag::VFlip: return "vflip";
    case AugmentationTag::HVFlip: return "hvflip";
    case AugmentationTag::None: break;
  }
  return "none";
}

void SplitRatios::validate() const {
  if (train < 0 || val < 0 || test < 0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

// --- CLAHE ---------------------------------------------------------------------

namespace {

constexpr int kBins = 256;

// Tile edges along one axis and, for each coordinate, the pair of tiles whose
// centres bracket it plus the weight of the second.
struct AxisTiles {
  std::vector<int> edges;
  std::vector<int> lo, hi;
  std::vector<double> weight;

  AxisTiles(int size, int tiles) : edges(tiles + 1), lo(size), hi(size), weight(size) {
    for (int i = 0; i <= tiles; ++i) edges[i] = static_cast<int>(static_cast<long>(i) * size / tiles);
    std::vector<double> centre(tiles);
    for (int i = 0; i < tiles; ++i) centre[i] = (edges[i] + edges[i + 1] - 1) / 2.0;
    for (int p = 0; p < size; ++p) {
      if (p <= centre.front()) {
        lo[p] = hi[p] = 0;
        weight[p] = 0;
      } else if (p >= centre.back()) {
        lo[p] = hi[p] = tiles - 1;
        weight[p] = 0;
      } else {
        int i = 0;
        while (centre[i + 1] < p) ++i;
        lo[p] = i;
        hi[p] = i + 1;
        weight[p] = (p - centre[i]) / (centre[i + 1] - centre[i]);
      }
    }
  }
};

// Equalises one plane of integer levels 0..255 in place.
void clahe_plane(std::vector<int>& plane, int height, int width, const ClaheConfig& cfg) {
  const AxisTiles ty(height, cfg.tiles_y), tx(width, cfg.tiles_x);
  std::vector<std::array<double, kBins>> luts(static_cast<std::size_t>(cfg.tiles_y) * cfg.tiles_x);
  for (int i = 0; i < cfg.tiles_y; ++i)
    for (int j = 0; j < cfg.tiles_x; ++j) {
      std::array<long, kBins> hist{};
      for (int r = ty.edges[i]; r < ty.edges[i + 1]; ++r)
        for (int c = tx.edges[j]; c < tx.edges[j + 1]; ++c) ++hist[plane[static_cast<std::size_t>(r) * width + c]];
      const long area = static_cast<long>(ty.edges[i + 1] - ty.edges[i]) * (tx.edges[j + 1] - tx.edges[j]);
      if (cfg.clip_limit > 0) {
        const double raw = cfg.clip_limit * static_cast<double>(area) / kBins;
        const long clip = std::max(1L, static_cast<long>(std::min(raw, static_cast<double>(area))));
        long excess = 0;
        for (auto& h : hist)
          if (h > clip) {
            excess += h - clip;
            h = clip;
          }
        const long batch = excess / kBins;
        long residual = excess - batch * kBins;
        for (auto& h : hist) h += batch;
        if (residual > 0) {
          const long step = std::max(kBins / residual, 1L);
          for (long b = 0; b < kBins && residual > 0; b += step, --residual) ++hist[b];
        }
      }
      auto& lut = luts[static_cast<std::size_t>(i) * cfg.tiles_x + j];
      long sum = 0;
      for (int b = 0; b < kBins; ++b) {
        sum += hist[b];
        lut[b] = std::clamp(std::round(255.0 * sum / area), 0.0, 255.0);
      }
    }
  std::vector<int> out(plane.size());
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const int v = plane[static_cast<std::size_t>(r) * width + c];
      auto lut = [&](int i, int j) { return luts[static_cast<std::size_t>(i) * cfg.tiles_x + j][v]; };
      const double wy = ty.weight[r], wx = tx.weight[c];
      const double top = lut(ty.lo[r], tx.lo[c]) * (1 - wx) + lut(ty.lo[r], tx.hi[c]) * wx;
      const double bottom = lut(ty.hi[r], tx.lo[c]) * (1 - wx) + lut(ty.hi[r], tx.hi[c]) * wx;
      out[static_cast<std::size_t>(r) * width + c] =
          static_cast<int>(std::clamp(std::round(top * (1 - wy) + bottom * wy), 0.0, 255.0));
    }
  plane = std::move(out);
}

int to_level(double v) { return static_cast<int>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

FundusImage clahe(const FundusImage& img, const ClaheConfig& cfg) {
  if (img.domain != ValueDomain::Raw0To255)
    throw DataError("clahe: expects a raw 0..255 image, got a normalised one");
  const int h = img.pixels.height, w = img.pixels.width;
  if (cfg.tiles_x < 1 || cfg.tiles_y < 1 || cfg.tiles_x > w || cfg.tiles_y > h)
    throw ConfigError("clahe: tile grid " + std::to_string(cfg.tiles_x) + "x" +
                      std::to_string(cfg.tiles_y) + " does not fit a " + std::to_string(w) + "x" +
                      std::to_string(h) + " image");
  FundusImage out = img;
  out.preprocessed = true;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (!cfg.luminance_only) {
    for (int ch = 0; ch < 3; ++ch) {
      std::vector<int> plane(n);
      for (std::size_t i = 0; i < n; ++i) plane[i] = to_level(img.pixels.pixels[i * 3 + ch]);
      clahe_plane(plane, h, w, cfg);
      for (std::size_t i = 0; i < n; ++i) out.pixels.pixels[i * 3 + ch] = plane[i];
    }
    return out;
  }
  std::vector<int> luma(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = &img.pixels.pixels[i * 3];
    luma[i] = to_level(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
  }
  std::vector<int> equalised = luma;
  clahe_plane(equalised, h, w, cfg);
  for (std::size_t i = 0; i < n; ++i)
    for (int ch = 0; ch < 3; ++ch) {
      const double v = img.pixels.pixels[i * 3 + ch];
      const double scaled = luma[i] > 0 ? v * equalised[i] / luma[i] : equalised[i];
      out.pixels.pixels[i * 3 + ch] = std::clamp(std::round(scaled), 0.0, 255.0);
    }
  return out;
}

FundusImage normalize(const FundusImage& img) {
  if (img.domain == ValueDomain::Normalized0To1)
    throw DataError("normalize: image is already normalised");
  FundusImage out = img;
  for (auto& v : out.pixels.pixels) v /= 255.0;
  out.domain = ValueDomain::Normalized0To1;
  return out;
}

// --- augmentation and splits -----------------------------------------------------

std::vector<SamplePair> augment_flips(const SamplePair& pair) {
  if (pair.augmentation != AugmentationTag::None)
    throw std::invalid_argument("augment_flips: pair " + pair.id + " is already augmented (" +
                                to_string(pair.augmentation) + ")");
  if (!pair.fundus.pixels.same_size(pair.target.rgb))
    throw ShapeError("augment_flips: fundus and target sizes differ for " + pair.id);
  std::vector<SamplePair> out;
  const std::string source = pair.source_id.empty() ? pair.id : pair.source_id;
  for (auto tag : {AugmentationTag::None, AugmentationTag::HFlip, AugmentationTag::VFlip,
                   AugmentationTag::HVFlip}) {
    const bool h = tag == AugmentationTag::HFlip || tag == AugmentationTag::HVFlip;
    const bool v = tag == AugmentationTag::VFlip || tag == AugmentationTag::HVFlip;
    SamplePair p = pair;
    p.source_id = source;
    p.augmentation = tag;
    if (tag != AugmentationTag::None) {
      p.id = pair.id + "_" + to_string(tag);
      p.fundus.pixels = flip(pair.fundus.pixels, h, v);
      p.target.rgb = flip(pair.target.rgb, h, v);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<SamplePair> augment_all(const std::vector<SamplePair>& pairs) {
  std::vector<SamplePair> out;
  out.reserve(pairs.size() * 4);
  for (const auto& p : pairs)
    for (auto& a : augment_flips(p)) out.push_back(std::move(a));
  return out;
}

namespace {

template <class V>
void shuffle(V& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

Partition make_splits(const std::vector<SamplePair>& pairs, const SplitRatios& ratios,
                      std::uint64_t seed) {
  ratios.validate();
  if (pairs.empty()) throw DataError("make_splits: no samples");
  std::set<std::string> unique;
  for (const auto& p : pairs) unique.insert(p.source_id.empty() ? p.id : p.source_id);
  std::vector<std::string> sources(unique.begin(), unique.end());
  Rng rng(derive_seed(seed, 0x5B17));
  shuffle(sources, rng);

  const auto n = static_cast<double>(sources.size());
  const auto n_train = static_cast<std::size_t>(std::lround(ratios.train * n));
  const auto n_val = std::min(sources.size() - n_train, static_cast<std::size_t>(std::lround(ratios.val * n)));
  std::map<std::string, Split> assignment;
  for (std::size_t i = 0; i < sources.size(); ++i)
    assignment[sources[i]] = i < n_train ? Split::Train : i < n_train + n_val ? Split::Val : Split::Test;

  Partition part;
  for (const auto& p : pairs) {
    SamplePair q = p;
    q.split = assignment.at(p.source_id.empty() ? p.id : p.source_id);
    (q.split == Split::Train ? part.train : q.split == Split::Val ? part.val : part.test).push_back(std::move(q));
  }
  return part;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(seed, 0x0DE2), epoch));
  shuffle(order, rng);
  return order;
}

// --- synthetic pairs -----------------------------------------------------------------

namespace {

HeightField draw_field(Rng& rng, const SynthConfig& cfg) {
  HeightField f(cfg.height, cfg.width);
  const int bumps = cfg.max_bumps > 0 ? rng.uniform_int(cfg.min_bumps, cfg.max_bumps) : 0;
  const double extent = std::min(cfg.height, cfg.width);
  for (int b = 0; b < bumps; ++b) {
    const double cy = rng.uniform(0.15, 0.85) * cfg.height;
    const double cx = rng.uniform(0.15, 0.85) * cfg.width;
    const double sigma = rng.uniform(0.08, 0.3) * extent;
    const double amp = rng.uniform(0.0, 500.0);
    for (int r = 0; r < cfg.height; ++r)
      for (int c = 0; c < cfg.width; ++c) {
        const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
        f.at(r, c) += amp * std::exp(-d2 / (2 * sigma * sigma));
      }
  }
  for (auto& v : f.values) v = std::clamp(v, 0.0, 500.0);
  return f;
}

RgbImage render_fundus(const HeightField& f, Rng& rng, const SynthConfig& cfg) {
  const int h = f.height, w = f.width;
  const Rgb base{0.85 + rng.uniform(-0.05, 0.05), 0.42 + rng.uniform(-0.05, 0.05),
                 0.18 + rng.uniform(-0.04, 0.04)};
  // Micrometres to pixel units: a full-range bump spans about a fifth of the image height.
  const double relief = 0.2 * std::min(h, w) / 500.0;
  const double lnorm = std::sqrt(0.25 + 0.25 + 1.0);
  const double lx = -0.5 / lnorm, ly = -0.5 / lnorm, lz = 1.0 / lnorm;

  RgbImage img(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double dx = (f.at(r, std::min(c + 1, w - 1)) - f.at(r, std::max(c - 1, 0))) / 2 * relief;
      const double dy = (f.at(std::min(r + 1, h - 1), c) - f.at(std::max(r - 1, 0), c)) / 2 * relief;
      const double nlen = std::sqrt(dx * dx + dy * dy + 1);
      const double shade = std::max(0.0, (-dx * lx - dy * ly + lz) / nlen);
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = base[ch] * (0.3 + 0.7 * shade);
    }

  std::vector<double> dist(static_cast<std::size_t>(h) * w, INFINITY);
  const int vessels = cfg.max_vessels > 0 ? rng.uniform_int(cfg.min_vessels, cfg.max_vessels) : 0;
  for (int v = 0; v < vessels; ++v) {
    std::array<std::array<double, 2>, 4> p;
    for (auto& q : p) q = {rng.uniform(-0.1, 1.1) * h, rng.uniform(-0.1, 1.1) * w};
    const double vw = rng.uniform(0.6, 1.6) * std::min(h, w) / 128.0 + 0.4;
    const int steps = 4 * (h + w);
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps, u = 1 - t;
      const double py = u * u * u * p[0][0] + 3 * u * u * t * p[1][0] + 3 * u * t * t * p[2][0] + t * t * t * p[3][0];
      const double px = u * u * u * p[0][1] + 3 * u * u * t * p[1][1] + 3 * u * t * t * p[2][1] + t * t * t * p[3][1];
      const int rad = static_cast<int>(std::ceil(3 * vw));
      for (int r = std::max(0, static_cast<int>(py) - rad); r <= std::min(h - 1, static_cast<int>(py) + rad); ++r)
        for (int c = std::max(0, static_cast<int>(px) - rad); c <= std::min(w - 1, static_cast<int>(px) + rad); ++c) {
          const double d = std::hypot(r - py, c - px) / vw;
          const std::size_t i = static_cast<std::size_t>(r) * w + c;
          dist[i] = std::min(dist[i], d);
        }
    }
  }
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (!std::isfinite(dist[i])) continue;
    const double k = std::exp(-dist[i] * dist[i]);
    img.pixels[i * 3 + 0] *= 1 - 0.45 * k;
    img.pixels[i * 3 + 1] *= 1 - 0.65 * k;
    img.pixels[i * 3 + 2] *= 1 - 0.6 * k;
  }
  for (auto& v : img.pixels) v = std::clamp(std::round(v * 255.0), 0.0, 255.0);
  return img;
}

}  // namespace

HeightField synth_height_field(std::uint64_t seed, int index, const SynthConfig& cfg) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  return draw_field(rng, cfg);
}

std::vector<SamplePair> synth_generate(int n, std::uint64_t seed, const SynthConfig& cfg,
                                       const ColorMap& cmap) {
  if (n < 1) throw ConfigError("synth_generate: n must be >= 1");
  if (cfg.height < 4 || cfg.width < 4) throw ConfigError("synth_generate: image too small");
  if (cfg.min_bumps < 0 || cfg.max_bumps < cfg.min_bumps || cfg.min_vessels < 0 ||
      cfg.max_vessels < cfg.min_vessels)
    throw ConfigError("synth_generate: invalid bump or vessel counts");
  std::vector<SamplePair> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const HeightField field = draw_field(rng, cfg);
    SamplePair& p = out[static_cast<std::size_t>(i)];
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05d", i);
    p.id = p.source_id = id;
    p.target = encode_height(field, cmap);
    p.fundus.pixels = render_fundus(field, rng, cfg);
  }
  return out;
}

// --- on-disk corpus --------------------------------------------------------------------

std::vector<ManifestRow> read_manifest(const std::string& root) {
  const fs::path path = fs::path(root) / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::vector<ManifestRow> rows;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "id,fundus_path,heightmap_path")
        throw DataError(path.string() + " line 1: expected header id,fundus_path,heightmap_path");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw DataError(path.string() + " line " + std::to_string(lineno) +
                      ": expected 3 non-empty fields id,fundus_path,heightmap_path");
    if (!seen.insert(fields[0]).second)
      throw DataError(path.string() + " line " + std::to_string(lineno) + ": duplicate id " + fields[0]);
    rows.push_back({fields[0], fields[1], fields[2]});
  }
  if (lineno == 0) throw DataError(path.string() + ": empty manifest");
  return rows;
}

void write_manifest(const std::string& root, const std::vector<ManifestRow>& rows) {
  const fs::path path = fs::path(root) / "manifest.csv";
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "id,fundus_path,heightmap_path\n";
  for (const auto& r : rows) out << r.id << ',' << r.fundus_path << ',' << r.heightmap_path << '\n';
}

void write_corpus(const std::string& root, const std::vector<SamplePair>& pairs) {
  fs::create_directories(fs::path(root) / "fundus");
  fs::create_directories(fs::path(root) / "heightmap");
  std::vector<ManifestRow> rows;
  for (const auto& p : pairs) {
    ManifestRow row{p.id, "fundus/" + p.id + ".png", "heightmap/" + p.id + ".png"};
    const double scale = p.fundus.domain == ValueDomain::Raw0To255 ? 1.0 : 255.0;
    write_png((fs::path(root) / row.fundus_path).string(), p.fundus.pixels, scale);
    write_png((fs::path(root) / row.heightmap_path).string(), p.target.rgb, 255.0);
    rows.push_back(std::move(row));
  }
  write_manifest(root, rows);
}

namespace {

RgbImage scaled(RgbImage img, double s) {
  for (auto& v : img.pixels) v *= s;
  return img;
}

}  // namespace

std::vector<SamplePair> load_corpus(const std::string& root, const IngestConfig& cfg) {
  const auto rows = read_manifest(root);
  std::vector<SamplePair> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    SamplePair& p = out[i];
    p.id = p.source_id = row.id;
    FundusImage raw{resize_bilinear(read_png((fs::path(root) / row.fundus_path).string()), cfg.size, cfg.size)};
    if (cfg.apply_clahe) raw = clahe(raw, cfg.clahe);
    p.fundus = normalize(raw);
    p.target.rgb = scaled(resize_bilinear(read_png((fs::path(root) / row.heightmap_path).string()),
                                          cfg.size, cfg.size),
                          1.0 / 255.0);
  }
  return out;
}

std::vector<SamplePair> load_prepared(const std::string& root) {
  const auto rows = read_manifest(root);
  std::vector<SamplePair> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    SamplePair& p = out[i];
    p.id = p.source_id = row.id;
    p.fundus.pixels = scaled(read_png((fs::path(root) / row.fundus_path).string()), 1.0 / 255.0);
    p.fundus.domain = ValueDomain::Normalized0To1;
    p.fundus.preprocessed = true;
    p.target.rgb = scaled(read_png((fs::path(root) / row.heightmap_path).string()), 1.0 / 255.0);
    if (!p.fundus.pixels.same_size(p.target.rgb))
      throw DataError(row.id + ": fundus and heightmap sizes differ");
  }
  return out;
}

}  // namespace fh
