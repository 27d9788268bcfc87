#include "esde/io.hpp"

#include "esde/hash.hpp"
#include "esde/types.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace esde {

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string hash_hex(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.hex();
}

std::string hash_file(const std::string& path) { return hash_hex(io::read_file(path)); }

namespace io {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void append(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::string Table::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out += ' ';
    out += columns[i];
  }
  if (!columns.empty()) out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ' ';
      append(out, r[i]);
    }
    out += '\n';
  }
  return out;
}

void write_table(const std::string& path, const Table& t, const std::string& comment) {
  std::string text;
  if (!comment.empty()) text += "# " + comment + "\n";
  text += t.to_text();
  write_file(path, text);
}

std::vector<double> parse_numbers(std::string_view line, const std::string& context) {
  std::vector<double> out;
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r' || *p == ',')) ++p;
    if (p >= end) break;
    double v = 0;
    auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) {
      // from_chars rejects "inf"/"nan" spellings it did not produce and a leading '+'
      throw FormatError(context + ": non-numeric token near '" +
                        std::string(p, std::min<std::size_t>(16, end - p)) + "'");
    }
    out.push_back(v);
    p = res.ptr;
  }
  return out;
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open table '" + path + "'");
  Table t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const char c = line[first];
    const bool numeric = (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '+';
    if (!numeric) {
      if (!t.columns.empty() || !t.rows.empty())
        throw FormatError(path + ":" + std::to_string(lineno) + ": unexpected header line");
      std::istringstream hs(line);
      std::string col;
      while (hs >> col) t.columns.push_back(col);
      continue;
    }
    t.rows.push_back(parse_numbers(line, path + ":" + std::to_string(lineno)));
  }
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

void write_file(const std::string& path, std::string_view content) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed for '" + path + "'");
}

std::string header_value(const std::string& header, const std::string& key) {
  std::istringstream in(header);
  std::string tok;
  const std::string prefix = key + "=";
  while (in >> tok) {
    if (tok.rfind(prefix, 0) == 0) return tok.substr(prefix.size());
  }
  throw FormatError("header is missing '" + key + "': " + header);
}

}  // namespace io
}  // namespace esde
