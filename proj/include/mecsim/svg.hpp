#pragma once

// Static SVG charts over result tables: trade-off scatter with two-axis
// error bars, grouped bars with error bars, and line plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mecsim::svg {

class PlotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Comma-separated table with a header row. Fields are not quoted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw PlotError("missing column " + name);
  }
  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
  double number(std::size_t row, const std::string& name) const {
    const std::string& s = rows.at(row).at(column(name));
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw PlotError("column " + name + " row " + std::to_string(row + 1) +
                      ": not a number '" + s + "'");
    }
  }
  const std::string& text(std::size_t row, const std::string& name) const {
    return rows.at(row).at(column(name));
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = split_csv_line(line);
      continue;
    }
    auto row = split_csv_line(line);
    if (row.size() != t.header.size())
      throw PlotError("row " + std::to_string(t.rows.size() + 1) + " has " +
                      std::to_string(row.size()) + " fields, header has " +
                      std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw PlotError("no rows");
  return t;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[i % 8];
}

struct Range {
  double lo, hi;
};

inline Range padded(double lo, double hi, bool from_zero = false) {
  if (from_zero) lo = std::min(lo, 0.0);
  if (!(hi > lo)) {
    const double d = std::abs(lo) > 0 ? std::abs(lo) * 0.1 : 1.0;
    return {lo - d, hi + d};
  }
  const double pad = (hi - lo) * 0.08;
  return {from_zero && lo == 0 ? 0.0 : lo - pad, hi + pad};
}

class Canvas {
 public:
  static constexpr double W = 640, H = 440, L = 80, R = 160, T = 40, B = 60;

  Canvas(const std::string& title, Range x, Range y, const std::string& xlabel,
         const std::string& ylabel)
      : x_(x), y_(y) {
    s_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << num(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << escape(title) << "</text>\n";
    line(L, H - B, W - R, H - B, "black");
    line(L, T, L, H - B, "black");
    for (int i = 0; i <= 4; ++i) {
      const double xv = x.lo + (x.hi - x.lo) * i / 4.0, yv = y.lo + (y.hi - y.lo) * i / 4.0;
      const double px = px_x(xv), py = px_y(yv);
      line(px, H - B, px, H - B + 4, "black");
      text(px, H - B + 18, label_num(xv), "middle");
      line(L - 4, py, L, py, "black");
      text(L - 6, py + 4, label_num(yv), "end");
    }
    text((L + W - R) / 2, H - 16, xlabel, "middle");
    s_ << "<text x=\"16\" y=\"" << num((T + H - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << num((T + H - B) / 2) << ")\">" << escape(ylabel) << "</text>\n";
  }

  double px_x(double v) const { return L + (v - x_.lo) / (x_.hi - x_.lo) * (W - L - R); }
  double px_y(double v) const { return H - B - (v - y_.lo) / (y_.hi - y_.lo) * (H - T - B); }

  void line(double x1, double y1, double x2, double y2, const char* color, double width = 1) {
    s_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
       << "\" y2=\"" << num(y2) << "\" stroke=\"" << color << "\" stroke-width=\"" << num(width)
       << "\"/>\n";
  }
  void text(double x, double y, const std::string& t, const char* anchor) {
    s_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << "\">"
       << escape(t) << "</text>\n";
  }
  void circle(double x, double y, const char* color, const std::string& cls) {
    s_ << "<circle class=\"" << cls << "\" cx=\"" << num(x) << "\" cy=\"" << num(y)
       << "\" r=\"4\" fill=\"" << color << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const char* color) {
    s_ << "<rect class=\"bar\" x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
       << "\" height=\"" << num(h) << "\" fill=\"" << color << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
    s_ << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      s_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    s_ << "\"/>\n";
  }
  void legend(std::size_t i, const std::string& label) {
    const double y = T + 16 * static_cast<double>(i) + 8;
    s_ << "<rect x=\"" << num(W - R + 12) << "\" y=\"" << num(y - 8) << "\" width=\"10\" height=\"10\" fill=\""
       << palette(i) << "\"/>\n";
    text(W - R + 28, y + 1, label, "start");
  }
  std::string finish() {
    s_ << "</svg>\n";
    return s_.str();
  }

 private:
  Range x_, y_;
  std::ostringstream s_;
};

struct ScatterPoint {
  std::string label;
  double x, x_err, y, y_err;
};

// One labeled point per entry with horizontal and vertical error bars.
inline std::string scatter(const std::string& title, const std::vector<ScatterPoint>& pts,
                           const std::string& xlabel, const std::string& ylabel) {
  if (pts.empty()) throw PlotError("no rows");
  double xlo = pts[0].x, xhi = xlo, ylo = pts[0].y, yhi = ylo;
  for (const auto& p : pts) {
    xlo = std::min(xlo, p.x - p.x_err);
    xhi = std::max(xhi, p.x + p.x_err);
    ylo = std::min(ylo, p.y - p.y_err);
    yhi = std::max(yhi, p.y + p.y_err);
  }
  Canvas c(title, padded(xlo, xhi), padded(ylo, yhi), xlabel, ylabel);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const char* col = palette(i);
    const double cx = c.px_x(p.x), cy = c.px_y(p.y);
    c.line(c.px_x(p.x - p.x_err), cy, c.px_x(p.x + p.x_err), cy, col, 1.5);
    c.line(cx, c.px_y(p.y - p.y_err), cx, c.px_y(p.y + p.y_err), col, 1.5);
    c.circle(cx, cy, col, "point");
    c.text(cx + 6, cy - 6, p.label, "start");
    c.legend(i, p.label);
  }
  return c.finish();
}

struct Series {
  std::string label;
  std::vector<double> values;
  std::vector<double> errors;  // may be empty
};

// Bars grouped by category, one bar per series, with error whiskers.
inline std::string grouped_bars(const std::string& title, const std::vector<std::string>& categories,
                                const std::vector<Series>& series, const std::string& xlabel,
                                const std::string& ylabel) {
  if (categories.empty() || series.empty()) throw PlotError("no rows");
  double hi = 0, lo = 0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double e = s.errors.empty() ? 0 : s.errors[i];
      hi = std::max(hi, s.values[i] + e);
      lo = std::min(lo, s.values[i] - e);
    }
  const double n = static_cast<double>(categories.size());
  Canvas c(title, {0, n}, padded(lo, hi, true), xlabel, ylabel);
  const double slot = 0.8 / static_cast<double>(series.size());
  for (std::size_t g = 0; g < categories.size(); ++g) {
    c.text(c.px_x(static_cast<double>(g) + 0.5), Canvas::H - Canvas::B + 32, categories[g],
           "middle");
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values.at(g);
      const double x0 = static_cast<double>(g) + 0.1 + slot * static_cast<double>(s);
      const double top = c.px_y(std::max(v, 0.0)), base = c.px_y(std::min(v, 0.0));
      c.rect(c.px_x(x0), top, c.px_x(x0 + slot) - c.px_x(x0), base - top, palette(s));
      if (!series[s].errors.empty()) {
        const double e = series[s].errors.at(g), mid = c.px_x(x0 + slot / 2);
        c.line(mid, c.px_y(v - e), mid, c.px_y(v + e), "black");
      }
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) c.legend(s, series[s].label);
  return c.finish();
}

// One polyline per series over shared x positions.
inline std::string lines(const std::string& title, const std::vector<double>& x,
                         const std::vector<Series>& series, const std::string& xlabel,
                         const std::string& ylabel) {
  if (x.empty() || series.empty()) throw PlotError("no rows");
  double ylo = series[0].values.at(0), yhi = ylo;
  for (const auto& s : series)
    for (double v : s.values) {
      ylo = std::min(ylo, v);
      yhi = std::max(yhi, v);
    }
  const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
  Canvas c(title, padded(*xlo, *xhi), padded(ylo, yhi), xlabel, ylabel);
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < x.size(); ++i)
      pts.emplace_back(c.px_x(x[i]), c.px_y(series[s].values.at(i)));
    c.polyline(pts, palette(s));
    for (const auto& [px, py] : pts) c.circle(px, py, palette(s), "point");
    c.legend(s, series[s].label);
  }
  return c.finish();
}

// Charts for an aggregated sweep table (columns variable, value, agent and
// <metric>, <metric>_std). Returns (file name, svg) pairs in a fixed order.
inline std::vector<std::pair<std::string, std::string>> summary_plots(const Table& t) {
  for (const char* c : {"variable", "value", "agent", "mean_response_s", "mean_response_s_std",
                        "mean_energy_j", "mean_energy_j_std", "local_fraction"})
    t.column(c);
  std::vector<double> values;
  std::vector<std::string> agents;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double v = t.number(r, "value");
    if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    const auto& a = t.text(r, "agent");
    if (std::find(agents.begin(), agents.end(), a) == agents.end()) agents.push_back(a);
  }
  const std::string var = t.text(0, "variable");
  auto lookup = [&](double v, const std::string& a, const std::string& col) {
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      if (t.number(r, "value") == v && t.text(r, "agent") == a) return t.number(r, col);
    throw PlotError("no row for " + a + " at " + var + "=" + label_num(v));
  };

  std::vector<ScatterPoint> pts;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::string label = t.text(r, "agent");
    if (values.size() > 1) label += " (" + var + "=" + label_num(t.number(r, "value")) + ")";
    pts.push_back({label, t.number(r, "mean_response_s"), t.number(r, "mean_response_s_std"),
                   t.number(r, "mean_energy_j"), t.number(r, "mean_energy_j_std")});
  }
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("tradeoff.svg", scatter("Response time vs energy", pts,
                                           "mean response time (s)", "mean energy (J)"));

  std::vector<std::string> cats;
  for (double v : values) cats.push_back(var + "=" + label_num(v));
  auto bar_series = [&](const std::string& col) {
    std::vector<Series> ss;
    for (const auto& a : agents) {
      Series s{a, {}, {}};
      for (double v : values) {
        s.values.push_back(lookup(v, a, col));
        s.errors.push_back(lookup(v, a, col + "_std"));
      }
      ss.push_back(std::move(s));
    }
    return ss;
  };
  out.emplace_back("bars_response.svg", grouped_bars("Mean response time", cats,
                                                     bar_series("mean_response_s"), var,
                                                     "mean response time (s)"));
  out.emplace_back("bars_energy.svg", grouped_bars("Mean energy", cats,
                                                   bar_series("mean_energy_j"), var,
                                                   "mean energy (J)"));
  std::vector<Series> lf;
  for (const auto& a : agents) {
    Series s{a, {}, {}};
    for (double v : values) s.values.push_back(lookup(v, a, "local_fraction"));
    lf.push_back(std::move(s));
  }
  out.emplace_back("local_fraction.svg",
                   lines("Locally computed fraction", values, lf, var, "local fraction"));
  return out;
}

}  // namespace mecsim::svg
