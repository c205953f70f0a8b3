#pragma once

#include <array>
#include <string>
#include <vector>

#include "fh/image.hpp"

namespace fh {

/// Draws `text` (5x7 glyphs, upper case; unknown characters render as blanks)
/// with its top-left corner at (row, col), clipped to the image.
void draw_text(RgbImage& img, int row, int col, const std::string& text, const std::array<double, 3>& rgb,
               int scale = 1);
int text_width(const std::string& text, int scale = 1);

/// Images laid out in rows, separated by `pad` pixels of `background`. Rows may
/// differ in length; every image in a row must have the same height.
RgbImage image_grid(const std::vector<std::vector<RgbImage>>& rows, int pad = 2, double background = 1.0);

/// A labelled image grid: optional column titles above and row labels to the left.
RgbImage labelled_grid(const std::vector<std::vector<RgbImage>>& rows, const std::vector<std::string>& column_titles,
                       const std::vector<std::string>& row_labels, int pad = 2);

/// Vertical bar chart in [0, 1] colour values, one bar per label, with the value
/// printed above each bar and the title on top.
RgbImage bar_chart(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values,
                   int height = 240, int bar_width = 48);

}  // namespace fh
