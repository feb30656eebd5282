#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fenlo {

/// One plotted series. Lines are polylines; `markers` draws circles at the
/// points instead (used for support-set markers).
struct Series {
  std::string label;
  std::vector<double> x, y;
  bool markers = false;
  bool dashed = false;
};

/// Translucent quantile band between lo(x) and hi(x).
struct Band {
  std::string label;
  std::vector<double> x, lo, hi;
};

struct PlotSpec {
  std::string title, x_label, y_label;
  std::vector<Series> lines;
  std::vector<Band> bands;
  std::optional<double> truth;  // dashed horizontal reference line
  int width = 800, height = 500;
};

/// Standalone SVG document: axes with ticks, legend, bands under lines.
/// Dependency-free and byte-deterministic for fixed input.
std::string render_svg(const PlotSpec& spec);

}  // namespace fenlo
