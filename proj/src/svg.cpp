#include "fenlo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace fenlo {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;
constexpr double kMarginLeft = 70, kMarginRight = 20, kMarginTop = 40, kMarginBottom = 55;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void grow(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (lo > hi) {  // nothing finite
      lo = 0.0;
      hi = 1.0;
    }
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
    double p = 0.05 * (hi - lo);
    lo -= p;
    hi += p;
  }
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  bool any_points = false;
  Range rx, ry;
  for (const Series& s : spec.lines) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("render_svg: x/y length mismatch");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      any_points = true;
      rx.grow(s.x[i]);
      ry.grow(s.y[i]);
    }
  }
  for (const Band& b : spec.bands) {
    if (b.x.size() != b.lo.size() || b.x.size() != b.hi.size()) {
      throw std::invalid_argument("render_svg: band length mismatch");
    }
    for (size_t i = 0; i < b.x.size(); ++i) {
      if (!std::isfinite(b.x[i]) || !std::isfinite(b.lo[i]) || !std::isfinite(b.hi[i])) continue;
      any_points = true;
      rx.grow(b.x[i]);
      ry.grow(b.lo[i]);
      ry.grow(b.hi[i]);
    }
  }
  if (!any_points) throw std::invalid_argument("render_svg: no rows");
  if (spec.truth) ry.grow(*spec.truth);
  rx.pad();
  ry.pad();

  double pw = spec.width - kMarginLeft - kMarginRight;
  double ph = spec.height - kMarginTop - kMarginBottom;
  auto px = [&](double x) { return kMarginLeft + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto py = [&](double y) { return kMarginTop + (ry.hi - y) / (ry.hi - ry.lo) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) +
         "\" height=\"" + std::to_string(spec.height) + "\" viewBox=\"0 0 " +
         std::to_string(spec.width) + " " + std::to_string(spec.height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Axes and ticks.
  svg += "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + num(kMarginLeft) + "\" y1=\"" + num(kMarginTop + ph) + "\" x2=\"" +
         num(kMarginLeft + pw) + "\" y2=\"" + num(kMarginTop + ph) + "\"/>\n";
  svg += "<line x1=\"" + num(kMarginLeft) + "\" y1=\"" + num(kMarginTop) + "\" x2=\"" +
         num(kMarginLeft) + "\" y2=\"" + num(kMarginTop + ph) + "\"/>\n";
  svg += "</g>\n";
  svg += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (int t = 0; t <= 5; ++t) {
    double xv = rx.lo + t * (rx.hi - rx.lo) / 5.0;
    double yv = ry.lo + t * (ry.hi - ry.lo) / 5.0;
    svg += "<line x1=\"" + num(px(xv)) + "\" y1=\"" + num(kMarginTop + ph) + "\" x2=\"" +
           num(px(xv)) + "\" y2=\"" + num(kMarginTop + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(kMarginTop + ph + 18) +
           "\" text-anchor=\"middle\">" + num(xv) + "</text>\n";
    svg += "<line x1=\"" + num(kMarginLeft - 5) + "\" y1=\"" + num(py(yv)) + "\" x2=\"" +
           num(kMarginLeft) + "\" y2=\"" + num(py(yv)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kMarginLeft - 8) + "\" y=\"" + num(py(yv) + 4) +
           "\" text-anchor=\"end\">" + num(yv) + "</text>\n";
  }
  svg += "<text x=\"" + num(kMarginLeft + pw / 2) + "\" y=\"" + num(spec.height - 10.0) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + escape(spec.x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + num(kMarginTop + ph / 2) +
         "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
         num(kMarginTop + ph / 2) + ")\">" + escape(spec.y_label) + "</text>\n";
  svg += "<text x=\"" + num(kMarginLeft + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-size=\"15\">" + escape(spec.title) + "</text>\n";
  svg += "</g>\n";

  // Bands under lines.
  for (size_t bi = 0; bi < spec.bands.size(); ++bi) {
    const Band& b = spec.bands[bi];
    const char* color = kPalette[bi % kPaletteSize];
    std::string pts;
    for (size_t i = 0; i < b.x.size(); ++i) {
      pts += num(px(b.x[i])) + "," + num(py(b.hi[i])) + " ";
    }
    for (size_t i = b.x.size(); i-- > 0;) {
      pts += num(px(b.x[i])) + "," + num(py(b.lo[i])) + " ";
    }
    svg += "<polygon points=\"" + pts + "\" fill=\"" + color +
           "\" fill-opacity=\"0.25\" stroke=\"none\"><title>" + escape(b.label) +
           "</title></polygon>\n";
  }

  if (spec.truth) {
    svg += "<line x1=\"" + num(kMarginLeft) + "\" y1=\"" + num(py(*spec.truth)) + "\" x2=\"" +
           num(kMarginLeft + pw) + "\" y2=\"" + num(py(*spec.truth)) +
           "\" stroke=\"black\" stroke-dasharray=\"6,4\" stroke-width=\"1.5\"/>\n";
  }

  for (size_t si = 0; si < spec.lines.size(); ++si) {
    const Series& s = spec.lines[si];
    const char* color = kPalette[si % kPaletteSize];
    if (s.markers) {
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        svg += "<circle cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) +
               "\" r=\"4\" fill=\"" + color + "\"/>\n";
      }
    } else {
      std::string pts;
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
      }
      svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
             std::string(s.dashed ? "\" stroke-dasharray=\"6,4" : "") +
             "\" stroke-width=\"1.8\"/>\n";
    }
    // Legend entry.
    double ly = kMarginTop + 16.0 * si;
    double lx = kMarginLeft + pw - 150;
    svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.label) + "</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

}  // namespace fenlo
