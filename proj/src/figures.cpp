#include "fh/figures.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "fh/errors.hpp"

namespace fh {
namespace {

using Glyph = std::array<const char*, 7>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> glyphs{
      {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
      {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
      {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
      {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
      {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
      {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
      {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
      {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
      {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
      {'A', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'B', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
      {'C', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
      {'D', {"###  ", "#  # ", "#   #", "#   #", "#   #", "#  # ", "###  "}},
      {'E', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
      {'F', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
      {'G', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"}},
      {'H', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'I', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'J', {"  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "}},
      {'K', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
      {'L', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
      {'M', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
      {'N', {"#   #", "#   #", "##  #", "# # #", "#  ##", "#   #", "#   #"}},
      {'O', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'P', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
      {'Q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
      {'R', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
      {'S', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
      {'T', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'U', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'V', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
      {'W', {"#   #", "#   #", "#   #", "# # #", "# # #", "# # #", " # # "}},
      {'X', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
      {'Y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'Z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
      {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
      {',', {"     ", "     ", "     ", "     ", " ##  ", "  #  ", " #   "}},
      {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
      {'+', {"     ", "  #  ", "  #  ", "#####", "  #  ", "  #  ", "     "}},
      {'=', {"     ", "     ", "#####", "     ", "#####", "     ", "     "}},
      {'_', {"     ", "     ", "     ", "     ", "     ", "     ", "#####"}},
      {'/', {"     ", "    #", "   # ", "  #  ", " #   ", "#    ", "     "}},
      {':', {"     ", " ##  ", " ##  ", "     ", " ##  ", " ##  ", "     "}},
      {'(', {"   # ", "  #  ", " #   ", " #   ", " #   ", "  #  ", "   # "}},
      {')', {" #   ", "  #  ", "   # ", "   # ", "   # ", "  #  ", " #   "}},
      {'%', {"##   ", "##  #", "   # ", "  #  ", " #   ", "#  ##", "   ##"}},
  };
  return glyphs;
}

constexpr int kGlyphW = 5, kGlyphH = 7, kAdvance = 6;

void fill_rect(RgbImage& img, int r0, int c0, int h, int w, const std::array<double, 3>& rgb) {
  for (int r = std::max(0, r0); r < std::min(img.height, r0 + h); ++r)
    for (int c = std::max(0, c0); c < std::min(img.width, c0 + w); ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = rgb[ch];
}

void blit(RgbImage& dst, const RgbImage& src, int r0, int c0) {
  for (int r = 0; r < src.height; ++r)
    for (int c = 0; c < src.width; ++c)
      for (int ch = 0; ch < 3; ++ch) dst.at(r0 + r, c0 + c, ch) = src.at(r, c, ch);
}

std::string format_value(double v) {
  char buf[32];
  if (std::abs(v) >= 100 || v == 0) std::snprintf(buf, sizeof buf, "%.2f", v);
  else if (std::abs(v) >= 0.01) std::snprintf(buf, sizeof buf, "%.4f", v);
  else std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

}  // namespace

int text_width(const std::string& text, int scale) {
  return text.empty() ? 0 : (static_cast<int>(text.size()) * kAdvance - 1) * scale;
}

void draw_text(RgbImage& img, int row, int col, const std::string& text, const std::array<double, 3>& rgb,
               int scale) {
  const auto& glyphs = font();
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto it = glyphs.find(static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
    if (it == glyphs.end()) continue;
    const int x0 = col + static_cast<int>(i) * kAdvance * scale;
    for (int gy = 0; gy < kGlyphH; ++gy)
      for (int gx = 0; gx < kGlyphW; ++gx)
        if (it->second[gy][gx] == '#') fill_rect(img, row + gy * scale, x0 + gx * scale, scale, scale, rgb);
  }
}

RgbImage image_grid(const std::vector<std::vector<RgbImage>>& rows, int pad, double background) {
  if (rows.empty()) throw ShapeError("image_grid: no rows");
  int width = 0, height = pad;
  for (const auto& row : rows) {
    if (row.empty()) throw ShapeError("image_grid: empty row");
    int w = pad;
    for (const auto& img : row) {
      if (img.height != row.front().height) throw ShapeError("image_grid: images in a row differ in height");
      w += img.width + pad;
    }
    width = std::max(width, w);
    height += row.front().height + pad;
  }
  RgbImage out(height, width, background);
  int r0 = pad;
  for (const auto& row : rows) {
    int c0 = pad;
    for (const auto& img : row) {
      blit(out, img, r0, c0);
      c0 += img.width + pad;
    }
    r0 += row.front().height + pad;
  }
  return out;
}

RgbImage labelled_grid(const std::vector<std::vector<RgbImage>>& rows, const std::vector<std::string>& column_titles,
                       const std::vector<std::string>& row_labels, int pad) {
  const RgbImage body = image_grid(rows, pad);
  int label_w = 0;
  for (const auto& l : row_labels) label_w = std::max(label_w, text_width(l) + 2 * pad);
  const int title_h = column_titles.empty() ? 0 : kGlyphH + 2 * pad;
  RgbImage out(body.height + title_h, body.width + label_w, 1.0);
  blit(out, body, title_h, label_w);
  const std::array<double, 3> ink{0, 0, 0};
  if (!column_titles.empty() && !rows.empty()) {
    int c0 = label_w + pad;
    for (std::size_t i = 0; i < column_titles.size() && i < rows.front().size(); ++i) {
      const int w = rows.front()[i].width;
      draw_text(out, pad, c0 + std::max(0, (w - text_width(column_titles[i])) / 2), column_titles[i], ink);
      c0 += w + pad;
    }
  }
  int r0 = title_h + pad;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int h = rows[i].front().height;
    if (i < row_labels.size()) draw_text(out, r0 + (h - kGlyphH) / 2, pad, row_labels[i], ink);
    r0 += h + pad;
  }
  return out;
}

RgbImage bar_chart(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values,
                   int height, int bar_width) {
  if (labels.size() != values.size() || labels.empty())
    throw ShapeError("bar_chart: need one value per label");
  const int gap = bar_width / 2, margin = 16;
  int slot = bar_width + gap;
  for (const auto& l : labels) slot = std::max(slot, text_width(l) + 6);
  for (double v : values) slot = std::max(slot, text_width(format_value(v)) + 6);
  const int width = std::max(2 * margin + slot * static_cast<int>(labels.size()), text_width(title, 2) + 2 * margin);
  const int top = margin + 2 * kGlyphH + 8 + kGlyphH + 6;  // title, then value labels
  const int baseline = height - margin - kGlyphH - 6;
  RgbImage img(height, width, 1.0);
  const std::array<double, 3> ink{0, 0, 0}, bar{0.23, 0.42, 0.71}, missing{0.8, 0.3, 0.3};
  draw_text(img, margin, (width - text_width(title, 2)) / 2, title, ink, 2);

  double lo = 0, hi = 0;
  for (double v : values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi - lo > 0 ? hi - lo : 1.0;
  const int usable = baseline - top;
  const int zero_row = baseline - static_cast<int>(std::lround((0 - lo) / span * usable));
  fill_rect(img, zero_row, margin / 2, 1, width - margin, ink);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int slot_left = margin + static_cast<int>(i) * slot;
    const int c0 = slot_left + (slot - bar_width) / 2;
    const double v = values[i];
    if (!std::isfinite(v)) {
      draw_text(img, zero_row - kGlyphH - 4, slot_left + (slot - text_width("N/A")) / 2, "N/A", missing);
    } else {
      const int len = static_cast<int>(std::lround(std::abs(v) / span * usable));
      const int r0 = v >= 0 ? zero_row - len : zero_row + 1;
      fill_rect(img, r0, c0, std::max(len, 1), bar_width, bar);
      const std::string txt = format_value(v);
      const int tr = v >= 0 ? r0 - kGlyphH - 3 : r0 + len + 3;
      draw_text(img, tr, slot_left + (slot - text_width(txt)) / 2, txt, ink);
    }
    draw_text(img, baseline + 6, slot_left + (slot - text_width(labels[i])) / 2, labels[i], ink);
  }
  return img;
}

}  // namespace fh
