#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "glcert/core.hpp"

namespace glcert {

// ---------------------------------------------------------------------------
// String-cell CSV tables
// ---------------------------------------------------------------------------

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    detail::require(row.size() == columns.size(), "Table: row has " + std::to_string(row.size()) + " cells, expected " +
                                                      std::to_string(columns.size()));
    rows.push_back(std::move(row));
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return j;
    throw InvalidArgument("Table: no column '" + name + "'");
  }

  double number(std::size_t row, const std::string& name) const {
    return std::strtod(rows.at(row)[column(name)].c_str(), nullptr);
  }

  friend bool operator==(const Table&, const Table&) = default;
};

// Cells never contain commas or newlines (identifiers and numbers only).
inline void write_table_csv(std::ostream& os, const Table& t) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      detail::require(cells[j].find_first_of(",\n") == std::string::npos, "write_table_csv: cell contains ',' or newline");
      os << (j ? "," : "") << cells[j];
    }
    os << '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
}

inline void write_table_csv(const std::string& path, const Table& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path + "'");
  write_table_csv(os, t);
}

inline Table read_table_csv(std::istream& in) {
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw LoadError("read_table_csv: empty input");
  t.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns.size()) throw LoadError("read_table_csv: ragged row '" + line + "'");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table read_table_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("read_table_csv: cannot open '" + path + "'");
  return read_table_csv(in);
}

// ---------------------------------------------------------------------------
// Config hash
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Standalone SVG line plots
// ---------------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x, y;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

inline void write_svg_plot(std::ostream& os, const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<Series>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  const double W = 640, H = 420, ml = 60, mr = 150, mt = 40, mb = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << detail::xml_escape(title) << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << format_double(std::round(xv * 1e4) / 1e4) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << format_double(std::round(yv * 1e3) / 1e3) << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << detail::xml_escape(xlabel) << "</text>\n";
  os << "<text x=\"15\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << (mt + H - mb) / 2 << ")\">" << detail::xml_escape(ylabel) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = palette[k % 8];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << px(s.x[i]) << ',' << py(s.y[i]);
    os << "\"/>\n";
    const double ly = mt + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << W - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - mr + 30 << "\" y2=\"" << ly << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - mr + 35 << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
}

inline void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<Series>& series) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path + "'");
  write_svg_plot(os, title, xlabel, ylabel, series);
}

}  // namespace glcert
