// Copyright 2026 The mifunnel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run records as CSV, and standalone SVG 1.1 line and grouped-bar charts.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mifunnel/common.hpp"

namespace mifunnel {

struct RunRecord {
  std::string run_id;
  std::string experiment;
  Index epoch = 0;
  double mi_xy_bits = 0.0;
  double mi_sy_bits = 0.0;
  double epsilon = 0.0;
  std::string noise_kind;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;

  bool operator==(const RunRecord&) const = default;
};

inline constexpr std::string_view kCsvHeader =
    "run_id,experiment,epoch,mi_xy_bits,mi_sy_bits,epsilon,noise_kind,noise_std,seed,wall_ms";

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvalidArgument("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline void validate(const RunRecord& r) {
  require(!r.run_id.empty(), "RunRecord: empty run_id");
  for (const std::string* s : {&r.run_id, &r.experiment, &r.noise_kind}) {
    require(s->find_first_of(",\n\r\"") == std::string::npos,
            "RunRecord: text fields may not contain commas, quotes or newlines");
  }
  require(std::isfinite(r.mi_xy_bits) && std::isfinite(r.mi_sy_bits) &&
              std::isfinite(r.epsilon) && std::isfinite(r.noise_std) && std::isfinite(r.wall_ms),
          "RunRecord: non-finite numeric field in run '" + r.run_id + "'");
}

// Rows grouped by run_id in first-appearance order, epochs ascending.
inline std::vector<RunRecord> ordered_records(std::vector<RunRecord> records) {
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (std::find(order.begin(), order.end(), r.run_id) == order.end()) order.push_back(r.run_id);
  }
  std::stable_sort(records.begin(), records.end(), [&](const RunRecord& a, const RunRecord& b) {
    const auto ia = std::find(order.begin(), order.end(), a.run_id) - order.begin();
    const auto ib = std::find(order.begin(), order.end(), b.run_id) - order.begin();
    return ia != ib ? ia < ib : a.epoch < b.epoch;
  });
  return records;
}

inline std::string format_csv(const std::vector<RunRecord>& records, bool include_wall_ms = true) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const RunRecord& r : ordered_records(records)) {
    validate(r);
    out << r.run_id << ',' << r.experiment << ',' << r.epoch << ',' << format_double(r.mi_xy_bits)
        << ',' << format_double(r.mi_sy_bits) << ',' << format_double(r.epsilon) << ','
        << r.noise_kind << ',' << format_double(r.noise_std) << ',' << r.seed << ','
        << (include_wall_ms ? format_double(r.wall_ms) : std::string("0")) << '\n';
  }
  return out.str();
}

inline std::vector<RunRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw InvalidArgument("parse_csv: missing or unexpected header");
  }
  std::vector<RunRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest = line;
    for (auto c = rest.find(','); c != std::string_view::npos; c = rest.find(',')) {
      f.push_back(rest.substr(0, c));
      rest = rest.substr(c + 1);
    }
    f.push_back(rest);
    const std::string where = "parse_csv: line " + std::to_string(line_no);
    if (f.size() != 10) throw InvalidArgument(where + ": expected 10 fields");
    auto num = [&](std::string_view s) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) {
        throw InvalidArgument(where + ": bad number '" + std::string(s) + "'");
      }
      return v;
    };
    auto integer = [&](std::string_view s, auto& v) {
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) {
        throw InvalidArgument(where + ": bad integer '" + std::string(s) + "'");
      }
    };
    RunRecord r;
    r.run_id = f[0];
    r.experiment = f[1];
    integer(f[2], r.epoch);
    r.mi_xy_bits = num(f[3]);
    r.mi_sy_bits = num(f[4]);
    r.epsilon = num(f[5]);
    r.noise_kind = f[6];
    r.noise_std = num(f[7]);
    integer(f[8], r.seed);
    r.wall_ms = num(f[9]);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void emit_csv(const std::string& path, const std::vector<RunRecord>& records) {
  require(!records.empty(), "emit_csv: no records");
  write_text_file(path, format_csv(records));
}

// ---- SVG -------------------------------------------------------------------

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<LineSeries> series;
  std::vector<std::pair<std::string, double>> reference_lines;  // horizontal
  bool markers = false;
};

struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> groups;
  std::vector<std::string> series;
  std::vector<std::vector<double>> values;  // [group][series]
};

namespace detail {

inline constexpr double kSvgWidth = 720.0;
inline constexpr double kSvgHeight = 440.0;
inline constexpr double kLeft = 70.0;
inline constexpr double kRight = 190.0;  // legend column
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 60.0;

inline const char* palette(std::size_t i) {
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                           "#bcbd22", "#17becf"};
  return colors[i % std::size(colors)];
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

// Axis-friendly 5-ish ticks covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi) {
  if (!(hi > lo)) hi = lo + 1.0;
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

inline std::string tick_label(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

class SvgCanvas {
 public:
  SvgCanvas(const std::string& title, double x0, double x1, double y0, double y1)
      : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kSvgWidth
         << "\" height=\"" << kSvgHeight << "\" viewBox=\"0 0 " << kSvgWidth << ' ' << kSvgHeight
         << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         << "<text x=\"" << kSvgWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
         << escape(title) << "</text>\n";
  }

  double px(double x) const {
    return kLeft + (x - x0_) / (x1_ - x0_) * (kSvgWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kSvgHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kSvgHeight - kTop - kBottom);
  }

  void axes(const std::string& x_label, const std::string& y_label, bool x_ticks) {
    const double bx = px(x0_), ex = px(x1_), by = py(y0_), ey = py(y1_);
    for (double t : nice_ticks(y0_, y1_)) {
      out_ << "<line x1=\"" << bx << "\" y1=\"" << py(t) << "\" x2=\"" << ex << "\" y2=\""
           << py(t) << "\" stroke=\"#e0e0e0\"/>\n"
           << "<text x=\"" << bx - 6 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">"
           << tick_label(t) << "</text>\n";
    }
    if (x_ticks) {
      for (double t : nice_ticks(x0_, x1_)) {
        out_ << "<text x=\"" << px(t) << "\" y=\"" << by + 18 << "\" text-anchor=\"middle\">"
             << tick_label(t) << "</text>\n";
      }
    }
    out_ << "<polyline points=\"" << bx << ',' << ey << ' ' << bx << ',' << by << ' ' << ex
         << ',' << by << "\" fill=\"none\" stroke=\"black\"/>\n"
         << "<text x=\"" << (bx + ex) / 2 << "\" y=\"" << kSvgHeight - 15
         << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
         << "<text transform=\"translate(18," << (by + ey) / 2
         << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  }

  void legend(std::size_t i, const std::string& name, const char* color, bool dashed = false) {
    const double x = kSvgWidth - kRight + 15;
    const double y = kTop + 10 + 18 * static_cast<double>(i);
    out_ << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 22 << "\" y2=\"" << y
         << "\" stroke=\"" << color << "\" stroke-width=\"3\""
         << (dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n"
         << "<text x=\"" << x + 28 << "\" y=\"" << y + 4 << "\">" << escape(name) << "</text>\n";
  }

  std::ostringstream& raw() { return out_; }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::ostringstream out_;
};

inline void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
    return;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

}  // namespace detail

inline std::string render_svg(const LineChart& chart) {
  require(!chart.series.empty(), "render_svg: no series");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : chart.series) {
    require(s.x.size() == s.y.size() && !s.x.empty(), "render_svg: bad series '" + s.name + "'");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      require(std::isfinite(s.x[i]) && std::isfinite(s.y[i]), "render_svg: non-finite point");
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  for (const auto& [name, v] : chart.reference_lines) {
    y0 = std::min(y0, v);
    y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  detail::pad_range(y0, y1);
  detail::SvgCanvas c(chart.title, x0, x1, y0, y1);
  c.axes(chart.x_label, chart.y_label, true);
  std::size_t legend_row = 0;
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = detail::palette(k);
    c.raw() << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      c.raw() << (i ? " " : "") << c.px(s.x[i]) << ',' << c.py(s.y[i]);
    }
    c.raw() << "\"/>\n";
    if (chart.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        c.raw() << "<circle cx=\"" << c.px(s.x[i]) << "\" cy=\"" << c.py(s.y[i])
                << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
      }
    }
    c.legend(legend_row++, s.name, color);
  }
  for (const auto& [name, v] : chart.reference_lines) {
    c.raw() << "<line x1=\"" << c.px(x0) << "\" y1=\"" << c.py(v) << "\" x2=\"" << c.px(x1)
            << "\" y2=\"" << c.py(v) << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    c.legend(legend_row++, name, "black", true);
  }
  return c.finish();
}

inline std::string render_svg(const BarChart& chart) {
  require(!chart.groups.empty() && !chart.series.empty(), "render_svg: empty bar chart");
  require(chart.values.size() == chart.groups.size(), "render_svg: group count mismatch");
  double y0 = 0.0, y1 = 0.0;
  for (const auto& row : chart.values) {
    require(row.size() == chart.series.size(), "render_svg: series count mismatch");
    for (double v : row) {
      require(std::isfinite(v), "render_svg: non-finite bar");
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  if (!(y1 > y0)) y1 = y0 + 1.0;
  y1 += 0.05 * (y1 - y0);
  const double n_groups = static_cast<double>(chart.groups.size());
  detail::SvgCanvas c(chart.title, 0.0, n_groups, y0, y1);
  c.axes(chart.x_label, chart.y_label, false);
  const double n_series = static_cast<double>(chart.series.size());
  const double bar = 0.8 / n_series;
  for (std::size_t g = 0; g < chart.groups.size(); ++g) {
    const double gx = static_cast<double>(g);
    c.raw() << "<text x=\"" << c.px(gx + 0.5) << "\" y=\"" << c.py(y0) + 18
            << "\" text-anchor=\"middle\">" << detail::escape(chart.groups[g]) << "</text>\n";
    for (std::size_t s = 0; s < chart.series.size(); ++s) {
      const double v = chart.values[g][s];
      const double left = c.px(gx + 0.1 + bar * static_cast<double>(s));
      const double right = c.px(gx + 0.1 + bar * static_cast<double>(s + 1));
      const double top = c.py(std::max(v, 0.0));
      const double bottom = c.py(std::min(v, 0.0));
      c.raw() << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left
              << "\" height=\"" << bottom - top << "\" fill=\"" << detail::palette(s)
              << "\"><title>" << detail::escape(chart.series[s]) << ' '
              << format_double(v) << "</title></rect>\n";
    }
  }
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    c.legend(s, chart.series[s], detail::palette(s));
  }
  return c.finish();
}

}  // namespace mifunnel
