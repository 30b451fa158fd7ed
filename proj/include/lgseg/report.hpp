#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lgseg/eval_suite.hpp"

namespace lgseg::report {

/// Comma-separated table with a header row. Cells never contain commas,
/// quotes or newlines (writing such a cell throws ConfigError).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
  const std::string& cell(size_t row, const std::string& name) const;
  void add_row(std::vector<std::string> row);
};

std::string to_csv(const Table& t);
Table parse_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const Table& t);
Table read_csv(const std::filesystem::path& path);

/// Round-trip decimal formatting (shortest form that parses back exactly);
/// NaN is written as "nan".
std::string format_number(double v);
double parse_number(const std::string& s);

/// Metric columns of a MetricReport in a fixed order.
std::vector<std::string> metric_columns();
std::vector<std::string> metric_values(const MetricReport& r);

/// Vertical bar chart; NaN bars are drawn as empty slots.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& comment = {});

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string svg_line_plot(const std::string& title, const std::vector<Series>& series, const std::string& x_label,
                          const std::string& y_label, const std::string& comment = {});

/// Merges the tables of several runs. All tables must share the same header
/// (otherwise ConfigError); a leading "run" column holds `run_names`.
Table merge_runs(const std::vector<Table>& tables, const std::vector<std::string>& run_names);

/// Loss-contribution matrix: one row per loss-weight setting, with a mark
/// ("x" or "") per loss term followed by the requested metric columns.
/// Needs the columns w_contrastive, w_embedding, w_semantic.
Table ablation_matrix(const Table& merged, const std::vector<std::string>& metrics);

}  // namespace lgseg::report
