#include "fh/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fh/errors.hpp"
#include "fh/layers.hpp"

namespace fh {

ColorMap::ColorMap()
    : ColorMap({{0.00, {0, 0, 1}}, {0.25, {0, 1, 1}}, {0.50, {0, 1, 0}}, {0.75, {1, 1, 0}},
                {1.00, {1, 0, 0}}}) {}

ColorMap::ColorMap(std::vector<ColorStop> stops, int resolution, double height_min,
                   double height_max)
    : stops_(std::move(stops)),
      resolution_(resolution),
      height_min_(height_min),
      height_max_(height_max) {
  if (stops_.size() < 2) throw ConfigError("colormap: need at least two stops");
  if (stops_.front().fraction != 0.0 || stops_.back().fraction != 1.0)
    throw ConfigError("colormap: stops must start at fraction 0 and end at 1");
  for (std::size_t i = 1; i < stops_.size(); ++i)
    if (!(stops_[i].fraction > stops_[i - 1].fraction))
      throw ConfigError("colormap: stop fractions must be strictly increasing");
  for (const auto& s : stops_)
    for (double v : s.rgb)
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("colormap: stop colours must lie in [0, 1]");
  if (resolution_ < static_cast<int>(stops_.size()))
    throw ConfigError("colormap: resolution smaller than the number of stops");
  if (!(height_max_ > height_min_)) throw ConfigError("colormap: empty height range");
  build_table();
}

Rgb ColorMap::at_fraction(double f) const {
  auto hi = std::upper_bound(stops_.begin(), stops_.end(), f,
                             [](double v, const ColorStop& s) { return v < s.fraction; });
  if (hi == stops_.begin()) return stops_.front().rgb;
  if (hi == stops_.end()) return stops_.back().rgb;
  const ColorStop& a = *(hi - 1);
  const ColorStop& b = *hi;
  const double t = (f - a.fraction) / (b.fraction - a.fraction);
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = a.rgb[c] + t * (b.rgb[c] - a.rgb[c]);
  return out;
}

void ColorMap::build_table() {
  const int n = resolution_;
  std::vector<double> fractions(n);
  for (int i = 0; i < n; ++i) fractions[i] = static_cast<double>(i) / (n - 1);
  for (const auto& s : stops_) {
    const auto idx = static_cast<std::size_t>(std::lround(s.fraction * (n - 1)));
    fractions[idx] = s.fraction;
  }
  table_colors_.resize(n);
  table_heights_.resize(n);
  for (int i = 0; i < n; ++i) {
    if (i > 0 && !(fractions[i] > fractions[i - 1]))
      throw ConfigError("colormap: stops too close together for resolution " + std::to_string(n));
    table_colors_[i] = at_fraction(fractions[i]);
    table_heights_[i] = height_min_ + fractions[i] * (height_max_ - height_min_);
  }
  auto sorted = table_colors_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("colormap: lookup table repeats a colour, decoding would be ambiguous");
}

std::size_t ColorMap::nearest_entry(const Rgb& rgb) const {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < table_colors_.size(); ++i) {
    const Rgb& t = table_colors_[i];
    const double d = (rgb[0] - t[0]) * (rgb[0] - t[0]) + (rgb[1] - t[1]) * (rgb[1] - t[1]) +
                     (rgb[2] - t[2]) * (rgb[2] - t[2]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

ColorMap ColorMap::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    std::vector<ColorStop> stops;
    for (const auto& s : j.at("stops")) {
      if (s.size() != 4) throw ConfigError("colormap: each stop is [fraction, r, g, b]");
      stops.push_back({s[0].get<double>(), {s[1].get<double>(), s[2].get<double>(), s[3].get<double>()}});
    }
    return ColorMap(std::move(stops), j.value("resolution", 256), j.value("height_min_um", 0.0),
                    j.value("height_max_um", 500.0));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("colormap: ") + e.what());
  }
}

ColorMap ColorMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("colormap: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ColorMap::to_json_text() const {
  nlohmann::json j;
  j["stops"] = nlohmann::json::array();
  for (const auto& s : stops_) j["stops"].push_back({s.fraction, s.rgb[0], s.rgb[1], s.rgb[2]});
  j["resolution"] = resolution_;
  j["height_min_um"] = height_min_;
  j["height_max_um"] = height_max_;
  return j.dump(2);
}

std::string colormap_digest(const ColorMap& cmap) { return bytes_digest(cmap.to_json_text()); }

Rgb colormap_lookup(double h, const ColorMap& cmap, double range_min, double range_max) {
  if (!(range_max > range_min)) throw ConfigError("colormap_lookup: empty height range");
  if (!(h >= range_min && h <= range_max)) {
    std::ostringstream msg;
    msg << "height " << h << " um outside [" << range_min << ", " << range_max << "]";
    throw RangeError(msg.str());
  }
  return cmap.at_fraction((h - range_min) / (range_max - range_min));
}

HeightmapImage encode_height(const HeightField& field, const ColorMap& cmap) {
  if (field.values.size() != static_cast<std::size_t>(field.height) * field.width)
    throw ShapeError("encode_height: field has " + std::to_string(field.values.size()) +
                     " values for " + std::to_string(field.height) + "x" + std::to_string(field.width));
  HeightmapImage out{RgbImage(field.height, field.width), colormap_digest(cmap)};
  for (int r = 0; r < field.height; ++r)
    for (int c = 0; c < field.width; ++c) {
      Rgb rgb;
      try {
        rgb = colormap_lookup(field.at(r, c), cmap, field.height_min, field.height_max);
      } catch (const RangeError& e) {
        throw RangeError(std::string(e.what()) + " at pixel (row " + std::to_string(r) +
                         ", col " + std::to_string(c) + ")");
      }
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(r, c, ch) = rgb[ch];
    }
  return out;
}

HeightField decode_height(const RgbImage& img, const ColorMap& cmap) {
  HeightField f(img.height, img.width, 0.0, cmap.height_min(), cmap.height_max());
  const auto& heights = cmap.table_heights();
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      f.at(r, c) = heights[cmap.nearest_entry({img.at(r, c, 0), img.at(r, c, 1), img.at(r, c, 2)})];
  return f;
}

HeightField decode_height(const HeightmapImage& img, const ColorMap& cmap) {
  return decode_height(img.rgb, cmap);
}

}  // namespace fh
