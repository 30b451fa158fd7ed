#include "lgseg/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lgseg/io.hpp"

namespace lgseg::report {

int Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

const std::string& Table::cell(size_t row, const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw ConfigError("table has no column '" + name + "'");
  return rows.at(row).at(c);
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw ShapeError("table row has " + std::to_string(row.size()) + " cells, header has " +
                     std::to_string(header.size()));
  rows.push_back(std::move(row));
}

namespace {

void check_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) throw ConfigError("CSV cell contains a separator: " + s);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string svg_header(int w, int h, const std::string& title, const std::string& comment) {
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << " " << h << "\">\n";
  if (!comment.empty()) ss << "<!-- " << xml_escape(comment) << " -->\n";
  ss << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  ss << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
  return ss.str();
}

const char* kColours[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7"};

}  // namespace

std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      check_cell(cells[i]);
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size())
        throw IngestionError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw IngestionError("CSV has no header");
  return t;
}

void write_csv(const std::filesystem::path& path, const Table& t) { io::write_text_file(path, to_csv(t)); }

Table read_csv(const std::filesystem::path& path) {
  try {
    return parse_csv(io::read_text_file(path));
  } catch (const IngestionError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IngestionError("not a number: '" + s + "'");
  return v;
}

std::vector<std::string> metric_columns() {
  return {"mIoU", "pAcc", "mIoU_k", "mIoU_u", "hIoU", "avgsim", "J_mean", "F_mean"};
}

std::vector<std::string> metric_values(const MetricReport& r) {
  return {format_number(r.miou),         format_number(r.pacc), format_number(r.miou_known),
          format_number(r.miou_unknown), format_number(r.hiou), format_number(r.avgsim),
          format_number(r.j_mean),       format_number(r.f_mean)};
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& comment) {
  if (labels.size() != values.size()) throw ShapeError("bar chart: labels and values differ in length");
  const int bar = 48, gap = 16, left = 50, top = 40, plot_h = 200;
  const int w = left + static_cast<int>(labels.size()) * (bar + gap) + gap;
  const int h = top + plot_h + 60;
  double vmax = 1.0;
  for (double v : values)
    if (std::isfinite(v)) vmax = std::max(vmax, v);
  std::ostringstream ss;
  ss << svg_header(std::max(w, 200), h, title, comment);
  ss << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << w << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  for (size_t i = 0; i < labels.size(); ++i) {
    const int x = left + gap + static_cast<int>(i) * (bar + gap);
    if (std::isfinite(values[i])) {
      const double bh = plot_h * std::max(0.0, values[i]) / vmax;
      ss << "<rect x=\"" << x << "\" y=\"" << fixed(top + plot_h - bh, 2) << "\" width=\"" << bar << "\" height=\""
         << fixed(bh, 2) << "\" fill=\"" << kColours[i % 8] << "\"/>\n";
      ss << "<text x=\"" << x + bar / 2 << "\" y=\"" << fixed(top + plot_h - bh - 4, 2)
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fixed(values[i]) << "</text>\n";
    }
    ss << "<text x=\"" << x + bar / 2 << "\" y=\"" << top + plot_h + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << xml_escape(labels[i])
       << "</text>\n";
  }
  ss << "</svg>\n";
  return ss.str();
}

std::string svg_line_plot(const std::string& title, const std::vector<Series>& series, const std::string& x_label,
                          const std::string& y_label, const std::string& comment) {
  const int w = 640, h = 360, left = 60, right = 20, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("line plot: x and y differ in length");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x1 > x0)) x0 = 0, x1 = std::isfinite(x1) ? x1 + 1 : 1;
  if (!(y1 > y0)) y0 = std::isfinite(y0) ? y0 - 1 : 0, y1 = y0 + 2;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + pw * (x - x0) / (x1 - x0); };
  auto py = [&](double y) { return top + ph * (1.0 - (y - y0) / (y1 - y0)); };
  std::ostringstream ss;
  ss << svg_header(w, h, title, comment);
  ss << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  ss << "<text x=\"" << left << "\" y=\"" << h - 30 << "\" font-family=\"sans-serif\" font-size=\"10\">"
     << format_number(x0) << "</text>\n";
  ss << "<text x=\"" << w - right << "\" y=\"" << h - 30
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << format_number(x1) << "</text>\n";
  ss << "<text x=\"" << left - 4 << "\" y=\"" << top + 10
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fixed(y1) << "</text>\n";
  ss << "<text x=\"" << left - 4 << "\" y=\"" << top + ph
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fixed(y0) << "</text>\n";
  ss << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(x_label) << "</text>\n";
  ss << "<text x=\"14\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 14 " << top + ph / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(y_label)
     << "</text>\n";
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    ss << "<polyline fill=\"none\" stroke=\"" << kColours[k % 8] << "\" stroke-width=\"1.2\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.y[i])) ss << fixed(px(s.x[i]), 2) << "," << fixed(py(s.y[i]), 2) << " ";
    ss << "\"/>\n";
    ss << "<text x=\"" << left + 8 << "\" y=\"" << top + 14 + 14 * k << "\" fill=\"" << kColours[k % 8]
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.name) << "</text>\n";
  }
  ss << "</svg>\n";
  return ss.str();
}

Table merge_runs(const std::vector<Table>& tables, const std::vector<std::string>& run_names) {
  if (tables.empty()) throw ConfigError("report needs at least one run");
  if (tables.size() != run_names.size()) throw ShapeError("merge_runs: one name per table required");
  Table out;
  out.header.push_back("run");
  out.header.insert(out.header.end(), tables.front().header.begin(), tables.front().header.end());
  for (size_t i = 0; i < tables.size(); ++i) {
    if (tables[i].header != tables.front().header)
      throw ConfigError("incompatible report schemas: run '" + run_names[i] + "' has different columns than '" +
                        run_names.front() + "'");
    for (const auto& r : tables[i].rows) {
      std::vector<std::string> row{run_names[i]};
      row.insert(row.end(), r.begin(), r.end());
      out.add_row(std::move(row));
    }
  }
  return out;
}

Table ablation_matrix(const Table& merged, const std::vector<std::string>& metrics) {
  Table out;
  out.header = {"run", "L_t", "L_e", "L_s"};
  out.header.insert(out.header.end(), metrics.begin(), metrics.end());
  const char* weight_cols[] = {"w_contrastive", "w_embedding", "w_semantic"};
  for (const char* c : weight_cols)
    if (std::find(merged.header.begin(), merged.header.end(), c) == merged.header.end())
      throw ConfigError(std::string("ablation matrix needs column '") + c + "'");
  for (size_t r = 0; r < merged.rows.size(); ++r) {
    std::vector<std::string> row{merged.cell(r, "run")};
    for (const char* c : weight_cols) row.push_back(parse_number(merged.cell(r, c)) != 0.0 ? "x" : "");
    for (const auto& m : metrics) row.push_back(merged.cell(r, m));
    out.add_row(std::move(row));
  }
  return out;
}

}  // namespace lgseg::report
