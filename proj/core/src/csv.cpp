#include "vvlab/csv.hpp"

#include <charconv>
#include <system_error>

#include "vvlab/error.hpp"

namespace vvlab::csv {

std::string format(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view where) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError(std::string(where) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

long long parse_int(std::string_view text, std::string_view where) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError(std::string(where) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    out.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Table read(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  Table table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_line(line);
    if (!have_header) {
      if (cells != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected header '" + want + "'");
      }
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != expected_header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(expected_header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(lineno);
  }
  if (!have_header) throw ParseError(path.string() + ": empty file");
  return table;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace vvlab::csv
