#include "esde/svg.hpp"

#include "esde/io.hpp"
#include "esde/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace esde::svg {
namespace {

constexpr double kW = 480, kH = 400, kL = 60, kR = 90, kT = 36, kB = 46;

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-300) lo -= 0.5, hi += 0.5;
  }
  double unit(double v) const { return (v - lo) / (hi - lo); }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string color(double u) {
  static const std::array<std::array<double, 3>, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140},
                                                            {94, 201, 98}, {253, 231, 37}}};
  u = std::clamp(std::isfinite(u) ? u : 0.0, 0.0, 1.0) * 4.0;
  const int k = std::min(3, static_cast<int>(u));
  const double f = u - k;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[k][0] + f * (stops[k + 1][0] - stops[k][0])),
                static_cast<int>(stops[k][1] + f * (stops[k + 1][1] - stops[k][1])),
                static_cast<int>(stops[k][2] + f * (stops[k + 1][2] - stops[k][2])));
  return buf;
}

class Doc {
 public:
  Doc(const Axes& ax, Range x, Range y) : x_(x), y_(y) {
    x_.finish();
    y_.finish();
    out_ = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
           "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out_ += "<text x=\"" + num(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" + escape(ax.title) + "</text>\n";
    out_ += "<rect x=\"" + num(kL) + "\" y=\"" + num(kT) + "\" width=\"" + num(kW - kL - kR) + "\" height=\"" +
            num(kH - kT - kB) + "\" fill=\"none\" stroke=\"black\"/>\n";
    out_ += "<text x=\"" + num(kL + (kW - kL - kR) / 2) + "\" y=\"" + num(kH - 8) + "\" text-anchor=\"middle\">" +
            escape(ax.xlabel) + "</text>\n";
    out_ += "<text x=\"14\" y=\"" + num(kT + (kH - kT - kB) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
            num(kT + (kH - kT - kB) / 2) + ")\">" + escape(ax.ylabel) + "</text>\n";
    for (int k = 0; k <= 4; ++k) {
      const double fx = x_.lo + k * (x_.hi - x_.lo) / 4, fy = y_.lo + k * (y_.hi - y_.lo) / 4;
      out_ += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(kH - kB + 14) + "\" text-anchor=\"middle\">" + label_num(fx) + "</text>\n";
      out_ += "<text x=\"" + num(kL - 4) + "\" y=\"" + num(py(fy) + 4) + "\" text-anchor=\"end\">" + label_num(fy) + "</text>\n";
    }
  }
  double px(double v) const { return kL + x_.unit(v) * (kW - kL - kR); }
  double py(double v) const { return kH - kB - y_.unit(v) * (kH - kT - kB); }
  void raw(const std::string& s) { out_ += s; }
  void colorbar(const Range& r) {
    const double x0 = kW - kR + 16, h = kH - kT - kB;
    for (int k = 0; k < 20; ++k)
      out_ += "<rect x=\"" + num(x0) + "\" y=\"" + num(kT + h * (19 - k) / 20) + "\" width=\"12\" height=\"" +
              num(h / 20 + 0.5) + "\" fill=\"" + color((k + 0.5) / 20) + "\"/>\n";
    out_ += "<text x=\"" + num(x0 + 16) + "\" y=\"" + num(kT + 8) + "\">" + label_num(r.hi) + "</text>\n";
    out_ += "<text x=\"" + num(x0 + 16) + "\" y=\"" + num(kT + h) + "\">" + label_num(r.lo) + "</text>\n";
  }
  void save(const std::string& path) {
    out_ += "</svg>\n";
    io::write_file(path, out_);
  }

 private:
  Range x_, y_;
  std::string out_;
};

void check_sizes(std::size_t n, std::initializer_list<std::size_t> others, const char* what) {
  for (auto m : others)
    if (m != n) throw DomainError(std::string(what) + ": input lengths differ");
}

}  // namespace

void scatter(const std::string& path, const Axes& ax, const std::vector<double>& x, const std::vector<double>& y,
             const std::vector<double>& value) {
  check_sizes(x.size(), {y.size(), value.size()}, "scatter");
  Range rx, ry, rv;
  for (std::size_t i = 0; i < x.size(); ++i) rx.add(x[i]), ry.add(y[i]), rv.add(value[i]);
  rv.finish();
  Doc d(ax, rx, ry);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    d.raw("<circle cx=\"" + num(d.px(x[i])) + "\" cy=\"" + num(d.py(y[i])) + "\" r=\"2\" fill=\"" +
          color(rv.unit(value[i])) + "\"/>\n");
  }
  d.colorbar(rv);
  d.save(path);
}

void quiver(const std::string& path, const Axes& ax, const std::vector<double>& x, const std::vector<double>& y,
            const std::vector<double>& u, const std::vector<double>& v) {
  check_sizes(x.size(), {y.size(), u.size(), v.size()}, "quiver");
  Range rx, ry;
  double umax = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    rx.add(x[i]), ry.add(y[i]);
    if (std::isfinite(u[i]) && std::isfinite(v[i])) umax = std::max(umax, std::hypot(u[i], v[i]));
  }
  Doc d(ax, rx, ry);
  const double len = 0.06 * (kW - kL - kR);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(umax > 0) || !std::isfinite(u[i]) || !std::isfinite(v[i])) continue;
    const double x0 = d.px(x[i]), y0 = d.py(y[i]);
    const double x1 = x0 + len * u[i] / umax, y1 = y0 - len * v[i] / umax;
    d.raw("<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y1) +
          "\" stroke=\"#2a4d8f\" stroke-width=\"1\"/><circle cx=\"" + num(x1) + "\" cy=\"" + num(y1) +
          "\" r=\"1.3\" fill=\"#2a4d8f\"/>\n");
  }
  d.save(path);
}

void heatmap(const std::string& path, const Axes& ax, int nx, int ny, double xmin, double xmax, double ymin,
             double ymax, const std::vector<double>& values) {
  if (nx < 1 || ny < 1 || values.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
    throw DomainError("heatmap: value count does not match grid");
  Range rx, ry, rv;
  rx.add(xmin), rx.add(xmax), ry.add(ymin), ry.add(ymax);
  for (double v : values) rv.add(v);
  rv.finish();
  Doc d(ax, rx, ry);
  const double cw = (kW - kL - kR) / nx, ch = (kH - kT - kB) / ny;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double v = values[static_cast<std::size_t>(j * nx + i)];
      if (!std::isfinite(v)) continue;
      d.raw("<rect x=\"" + num(kL + i * cw) + "\" y=\"" + num(kH - kB - (j + 1) * ch) + "\" width=\"" + num(cw + 0.3) +
            "\" height=\"" + num(ch + 0.3) + "\" fill=\"" + color(rv.unit(v)) + "\"/>\n");
    }
  }
  d.colorbar(rv);
  d.save(path);
}

void lines(const std::string& path, const Axes& ax, const std::vector<Series>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  Range rx, ry;
  for (const auto& s : series) {
    check_sizes(s.t.size(), {s.mean.size()}, "lines");
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      rx.add(s.t[i]), ry.add(s.mean[i]);
      if (i < s.lo.size()) ry.add(s.lo[i]);
      if (i < s.hi.size()) ry.add(s.hi[i]);
    }
  }
  Doc d(ax, rx, ry);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* c = palette[k % 6];
    if (s.lo.size() == s.t.size() && s.hi.size() == s.t.size() && !s.t.empty()) {
      std::string pts;
      for (std::size_t i = 0; i < s.t.size(); ++i) pts += num(d.px(s.t[i])) + "," + num(d.py(s.hi[i])) + " ";
      for (std::size_t i = s.t.size(); i-- > 0;) pts += num(d.px(s.t[i])) + "," + num(d.py(s.lo[i])) + " ";
      d.raw(std::string("<polygon points=\"") + pts + "\" fill=\"" + c + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n");
    }
    std::string pts;
    for (std::size_t i = 0; i < s.t.size(); ++i) pts += num(d.px(s.t[i])) + "," + num(d.py(s.mean[i])) + " ";
    d.raw(std::string("<polyline points=\"") + pts + "\" fill=\"none\" stroke=\"" + c + "\" stroke-width=\"1.5\"/>\n");
    d.raw("<text x=\"" + num(kW - kR + 6) + "\" y=\"" + num(kT + 14 * (k + 1)) + "\" fill=\"" + c + "\">" +
          escape(s.label) + "</text>\n");
  }
  d.save(path);
}

}  // namespace esde::svg
