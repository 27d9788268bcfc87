#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace esde::io {

/// Shortest round-trip decimal text of a double.
std::string fmt(double v);
void append(std::string& out, double v);

/// Whitespace-separated numeric table with `#` comment lines and an optional
/// single leading non-numeric header line.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> r) { rows.push_back(std::move(r)); }
  std::string to_text() const;
};

void write_table(const std::string& path, const Table& t, const std::string& comment = {});
Table read_table(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
void ensure_parent_dir(const std::string& path);
void ensure_dir(const std::string& path);

/// Parses `key=value` tokens from a header line such as
/// "# esde-trajectory N=30 dt=1e-05".
std::string header_value(const std::string& header, const std::string& key);

std::vector<double> parse_numbers(std::string_view line, const std::string& context);

}  // namespace esde::io
