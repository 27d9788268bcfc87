#pragma once

#include <string>
#include <vector>

namespace esde::svg {

struct Axes {
  std::string title;
  std::string xlabel;
  std::string ylabel;
};

/// Points colored by value.
void scatter(const std::string& path, const Axes& ax, const std::vector<double>& x,
             const std::vector<double>& y, const std::vector<double>& value);

/// Arrows (u, v) anchored at (x, y), scaled to a fraction of the plot width.
void quiver(const std::string& path, const Axes& ax, const std::vector<double>& x,
            const std::vector<double>& y, const std::vector<double>& u, const std::vector<double>& v);

/// nx x ny cell map over [xmin, xmax] x [ymin, ymax]; values x fastest, NaN cells left blank.
void heatmap(const std::string& path, const Axes& ax, int nx, int ny, double xmin, double xmax,
             double ymin, double ymax, const std::vector<double>& values);

struct Series {
  std::string label;
  std::vector<double> t;
  std::vector<double> mean;
  std::vector<double> lo;  // optional envelope
  std::vector<double> hi;
};

void lines(const std::string& path, const Axes& ax, const std::vector<Series>& series);

}  // namespace esde::svg
