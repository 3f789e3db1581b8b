#pragma once

// Minimal standalone SVG writer for the plot subcommand: scatter/line charts
// with axes, tick labels and per-series colors. No external dependencies.

#include <string>
#include <vector>

namespace pxfb::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool line = true;
  bool points = true;
};

struct Plot {
  std::string title;
  std::string x_label, y_label;
  bool log_y = false;
  std::vector<Series> series;
  std::vector<std::string> annotations;  // free-text lines in the top corner
};

std::string render(const Plot& plot, int width = 640, int height = 420);
void save(const Plot& plot, const std::string& path, int width = 640,
          int height = 420);

}  // namespace pxfb::svg
