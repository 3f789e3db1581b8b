#include "pxfb/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pxfb/common.hpp"

namespace pxfb::svg {

namespace {

const char* kPalette[] = {"#1f6fb2", "#c44e52", "#55a868", "#8172b2",
                          "#ccb974", "#64b5cd"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

// round tick step: 1, 2 or 5 times a power of ten covering span/target
double tick_step(double span, int target) {
  if (span <= 0) return 1;
  double raw = span / target;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * m >= raw) return mag * m;
  }
  return mag * 10.0;
}

}  // namespace

std::string render(const Plot& plot, int width, int height) {
  const double ml = 62, mr = 16, mt = 34, mb = 46;  // margins
  const double pw = width - ml - mr, ph = height - mt - mb;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const Series& s : plot.series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      double y = s.y[i];
      if (plot.log_y && !(y > 0)) continue;
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      double yy = plot.log_y ? std::log10(y) : y;
      y_min = std::min(y_min, yy);
      y_max = std::max(y_max, yy);
    }
  }
  if (!std::isfinite(x_min)) {
    x_min = 0;
    x_max = 1;
    y_min = 0;
    y_max = 1;
  }
  if (x_max - x_min < 1e-12) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }

  auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) {
    double yy = plot.log_y ? std::log10(y) : y;
    return mt + ph - (yy - y_min) / (y_max - y_min) * ph;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
     << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"14\">" << escape(plot.title)
     << "</text>\n";

  // axes box
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
     << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";

  // x ticks
  double xs = tick_step(x_max - x_min, 6);
  for (double t = std::ceil(x_min / xs) * xs; t <= x_max + 1e-9 * xs; t += xs) {
    double X = px(t);
    os << "<line x1=\"" << fmt(X) << "\" y1=\"" << mt + ph << "\" x2=\"" << fmt(X)
       << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << fmt(X) << "\" y=\"" << mt + ph + 17
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
       << fmt(t) << "</text>\n";
  }
  // y ticks (decades when log)
  double ys = tick_step(y_max - y_min, 5);
  for (double t = std::ceil(y_min / ys) * ys; t <= y_max + 1e-9 * ys; t += ys) {
    double Y = mt + ph - (t - y_min) / (y_max - y_min) * ph;
    os << "<line x1=\"" << ml - 4 << "\" y1=\"" << fmt(Y) << "\" x2=\"" << ml
       << "\" y2=\"" << fmt(Y) << "\" stroke=\"#444\"/>\n";
    std::string label = plot.log_y ? ("1e" + fmt(t)) : fmt(t);
    os << "<text x=\"" << ml - 7 << "\" y=\"" << fmt(Y + 3)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
       << label << "</text>\n";
  }

  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
     << escape(plot.x_label) << "</text>\n";
  os << "<text x=\"14\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
     << "transform=\"rotate(-90 14 " << mt + ph / 2 << ")\">"
     << escape(plot.y_label) << "</text>\n";

  int color = 0;
  double legend_y = mt + 14;
  for (const Series& s : plot.series) {
    const char* c = kPalette[color % 6];
    ++color;
    if (s.line && s.x.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
      for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (plot.log_y && !(s.y[i] > 0)) continue;
        os << fmt(px(s.x[i])) << "," << fmt(py(s.y[i])) << " ";
      }
      os << "\"/>\n";
    }
    if (s.points) {
      for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (plot.log_y && !(s.y[i] > 0)) continue;
        os << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i]))
           << "\" r=\"2.5\" fill=\"" << c << "\"/>\n";
      }
    }
    if (!s.label.empty()) {
      os << "<rect x=\"" << ml + pw - 150 << "\" y=\"" << legend_y - 8
         << "\" width=\"10\" height=\"10\" fill=\"" << c << "\"/>\n";
      os << "<text x=\"" << ml + pw - 136 << "\" y=\"" << legend_y + 1
         << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape(s.label)
         << "</text>\n";
      legend_y += 14;
    }
  }

  double ann_y = mt + 14;
  for (const std::string& a : plot.annotations) {
    os << "<text x=\"" << ml + 8 << "\" y=\"" << ann_y
       << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">"
       << escape(a) << "</text>\n";
    ann_y += 13;
  }

  os << "</svg>\n";
  return os.str();
}

void save(const Plot& plot, const std::string& path, int width, int height) {
  std::ofstream os(path);
  require(os.good(), ErrorKind::io, "cannot open " + path + " for writing");
  os << render(plot, width, height);
}

}  // namespace pxfb::svg
