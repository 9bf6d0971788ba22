// Copyright 2026 the blidar authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "blidar/error.hpp"

namespace blidar::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 55;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Range {
  double lo = 0.0, hi = 1.0;
};

Range data_range(const std::vector<Series>& series, bool use_y) {
  Range r{0.0, 0.0};
  bool first = true;
  for (const auto& s : series) {
    const auto& vals = use_y ? s.ys : s.xs;
    for (const double v : vals) {
      if (!std::isfinite(v)) continue;
      if (first) {
        r.lo = r.hi = v;
        first = false;
      } else {
        r.lo = std::min(r.lo, v);
        r.hi = std::max(r.hi, v);
      }
    }
  }
  if (first) return {0.0, 1.0};
  if (r.hi - r.lo < 1e-12) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  // A little headroom keeps markers off the frame.
  const double pad = 0.05 * (r.hi - r.lo);
  return {r.lo - pad, r.hi + pad};
}

class Canvas {
 public:
  Canvas(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
         const std::string& y_label, const std::vector<Series>& series)
      : out_(path, std::ios::trunc), xr_(data_range(series, false)), yr_(data_range(series, true)) {
    if (!out_) throw data_error("cannot write plot: " + path.string());
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out_ << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    out_ << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
    frame(x_label, y_label);
  }

  double px(double x) const {
    return kMarginLeft + (x - xr_.lo) / (xr_.hi - xr_.lo) * plot_w();
  }
  double py(double y) const {
    return kHeight - kMarginBottom - (y - yr_.lo) / (yr_.hi - yr_.lo) * plot_h();
  }

  void polyline(const Series& s, const char* color) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (i) out_ << ' ';
      out_ << fmt(px(s.xs[i])) << ',' << fmt(py(s.ys[i]));
    }
    out_ << "\"/>\n";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      out_ << "<circle cx=\"" << fmt(px(s.xs[i])) << "\" cy=\"" << fmt(py(s.ys[i]))
           << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
  }

  void dots(const Series& s, const char* color) {
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      out_ << "<circle cx=\"" << fmt(px(s.xs[i])) << "\" cy=\"" << fmt(py(s.ys[i]))
           << "\" r=\"2.5\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
    }
  }

  void legend(const std::vector<Series>& series) {
    double y = kMarginTop + 6;
    for (std::size_t i = 0; i < series.size(); ++i) {
      const char* color = kPalette[i % std::size(kPalette)];
      out_ << "<rect x=\"" << kWidth - kMarginRight - 130 << "\" y=\"" << fmt(y - 9)
           << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
      out_ << "<text x=\"" << kWidth - kMarginRight - 112 << "\" y=\"" << fmt(y + 2)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[i].label
           << "</text>\n";
      y += 18;
    }
  }

  void close() { out_ << "</svg>\n"; }

 private:
  double plot_w() const { return kWidth - kMarginLeft - kMarginRight; }
  double plot_h() const { return kHeight - kMarginTop - kMarginBottom; }

  void frame(const std::string& x_label, const std::string& y_label) {
    out_ << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\""
         << fmt(plot_w()) << "\" height=\"" << fmt(plot_h())
         << "\" fill=\"none\" stroke=\"#404040\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = xr_.lo + (xr_.hi - xr_.lo) * i / 5.0;
      const double fy = yr_.lo + (yr_.hi - yr_.lo) * i / 5.0;
      out_ << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << kHeight - kMarginBottom + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
           << fmt(fx) << "</text>\n";
      out_ << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << fmt(py(fy) + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fy)
           << "</text>\n";
    }
    out_ << "<text x=\"" << kMarginLeft + plot_w() / 2 << "\" y=\"" << kHeight - 14
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
         << "</text>\n";
    out_ << "<text x=\"18\" y=\"" << kMarginTop + plot_h() / 2
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         << "transform=\"rotate(-90 18 " << kMarginTop + plot_h() / 2 << ")\">" << y_label
         << "</text>\n";
  }

  std::ofstream out_;
  Range xr_, yr_;
};

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  Canvas canvas(path, title, x_label, y_label, series);
  for (std::size_t i = 0; i < series.size(); ++i)
    canvas.polyline(series[i], kPalette[i % std::size(kPalette)]);
  canvas.legend(series);
  canvas.close();
}

void write_scatter_chart(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series) {
  Canvas canvas(path, title, x_label, y_label, series);
  for (std::size_t i = 0; i < series.size(); ++i)
    canvas.dots(series[i], kPalette[i % std::size(kPalette)]);
  canvas.legend(series);
  canvas.close();
}

}  // namespace blidar::svg
