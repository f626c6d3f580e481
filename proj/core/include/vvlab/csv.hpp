#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace vvlab::csv {

// Shortest decimal text that parses back to the same double.
std::string format(double value);

double parse_double(std::string_view text, std::string_view where);
long long parse_int(std::string_view text, std::string_view where);

std::vector<std::string> split_line(std::string_view line);

// Rows of a comma-separated file. The first line must equal the expected
// header column list; blank lines are skipped. Throws ParseError with the
// offending line number.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};
Table read(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

// Opens a file for writing, creating parent directories; throws on failure.
std::ofstream open_for_write(const std::filesystem::path& path);

}  // namespace vvlab::csv
