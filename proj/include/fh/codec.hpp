#pragma once

#include <array>
#include <string>
#include <vector>

#include "fh/image.hpp"

namespace fh {

using Rgb = std::array<double, 3>;

struct ColorStop {
  double fraction = 0;
  Rgb rgb{};
  bool operator==(const ColorStop&) const = default;
};

/// Heights in micrometres over an H x W grid.
struct HeightField {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  double height_min = 0.0;
  double height_max = 500.0;

  HeightField() = default;
  HeightField(int h, int w, double fill = 0.0, double lo = 0.0, double hi = 500.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill), height_min(lo),
        height_max(hi) {}
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

/// Piecewise-linear colour ramp over [height_min, height_max] with a lookup
/// table of `resolution` entries for decoding.
///
/// Table entries sit at evenly spaced heights, except that the entry nearest
/// each control point is moved onto it, so control-point colours decode to
/// their exact heights.
class ColorMap {
 public:
  /// Blue, cyan, green, yellow, red at 0, 1/4, 1/2, 3/4, 1 of 0..500 um.
  ColorMap();
  ColorMap(std::vector<ColorStop> stops, int resolution = 256, double height_min = 0.0,
           double height_max = 500.0);

  /// {"stops": [[fraction, r, g, b], ...], "resolution": int,
  ///  "height_min_um": num, "height_max_um": num}
  static ColorMap from_json_text(const std::string& text);
  static ColorMap load(const std::string& path);
  std::string to_json_text() const;

  const std::vector<ColorStop>& stops() const { return stops_; }
  int resolution() const { return resolution_; }
  double height_min() const { return height_min_; }
  double height_max() const { return height_max_; }
  /// Colour at a fraction in [0, 1] of the height range.
  Rgb at_fraction(double f) const;
  const std::vector<Rgb>& table_colors() const { return table_colors_; }
  const std::vector<double>& table_heights() const { return table_heights_; }
  /// Index of the table colour nearest to `rgb`; ties go to the lower height.
  std::size_t nearest_entry(const Rgb& rgb) const;

  bool operator==(const ColorMap& o) const { return stops_ == o.stops_ && resolution_ == o.resolution_ &&
                                                     height_min_ == o.height_min_ && height_max_ == o.height_max_; }

 private:
  void build_table();

  std::vector<ColorStop> stops_;
  int resolution_ = 256;
  double height_min_ = 0.0;
  double height_max_ = 500.0;
  std::vector<Rgb> table_colors_;
  std::vector<double> table_heights_;
};

/// Colour-encoded heightmap; pixels in [0, 1].
struct HeightmapImage {
  RgbImage rgb;
  /// SHA-256 of the colour map's JSON; empty when unknown (e.g. read from disk).
  std::string colormap_digest;
};

/// Colour of height `h`. Throws RangeError outside [range_min, range_max].
Rgb colormap_lookup(double h, const ColorMap& cmap, double range_min, double range_max);
inline Rgb colormap_lookup(double h, const ColorMap& cmap) {
  return colormap_lookup(h, cmap, cmap.height_min(), cmap.height_max());
}

/// Per-pixel colormap_lookup over the field's range. Throws RangeError naming
/// the first offending pixel.
HeightmapImage encode_height(const HeightField& field, const ColorMap& cmap);

/// Nearest table colour per pixel, in Euclidean RGB distance.
HeightField decode_height(const HeightmapImage& img, const ColorMap& cmap);
HeightField decode_height(const RgbImage& img, const ColorMap& cmap);

std::string colormap_digest(const ColorMap& cmap);

}  // namespace fh
