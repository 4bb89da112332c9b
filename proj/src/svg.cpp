#include "bas/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bas {

void SvgChart::add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("svg: series extents differ");
  series_.push_back({std::move(name), std::move(xs), std::move(ys)});
}

void SvgChart::write(const std::string& path) const {
  const int width = 640, height = 400;
  const int ml = 60, mr = 20, mt = 36, mb = 46;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series_)
    for (size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      if (first) {
        x0 = x1 = s.xs[i];
        y0 = y1 = s.ys[i];
        first = false;
      }
      x0 = std::min(x0, s.xs[i]);
      x1 = std::max(x1, s.xs[i]);
      y0 = std::min(y0, s.ys[i]);
      y1 = std::max(y1, s.ys[i]);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;

  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y0) / (y1 - y0) * ph; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream os(path);
  if (!os) throw std::runtime_error("svg: cannot write " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << title_ << "</text>\n";

  // axes with four ticks per side
  os << "<g stroke=\"#888\" stroke-width=\"1\" font-size=\"10\">\n";
  for (int t = 0; t <= 4; ++t) {
    double xv = x0 + (x1 - x0) * t / 4.0;
    double yv = y0 + (y1 - y0) * t / 4.0;
    os << "<line x1=\"" << px(xv) << "\" y1=\"" << mt << "\" x2=\"" << px(xv) << "\" y2=\""
       << mt + ph << "\" stroke=\"#eee\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << py(yv) << "\" x2=\"" << ml + pw << "\" y2=\""
       << py(yv) << "\" stroke=\"#eee\"/>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << height - mb + 14
       << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">" << num(xv) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 3
       << "\" text-anchor=\"end\" stroke=\"none\" fill=\"#333\">" << num(yv) << "</text>\n";
  }
  os << "</g>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
     << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label_ << "</text>\n";
  os << "<text x=\"14\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " << mt + ph / 2
     << ")\">" << y_label_ << "</text>\n";

  for (size_t si = 0; si < series_.size(); ++si) {
    const auto& s = series_[si];
    os << "<polyline fill=\"none\" stroke=\"" << colors[si % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      os << num(px(s.xs[i])) << "," << num(py(s.ys[i])) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << ml + pw - 6 << "\" y=\"" << mt + 14 + 14 * double(si)
       << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << colors[si % 6] << "\">" << s.name
       << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace bas
