#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carbonedge::csv {

// Splits one CSV record. Fields may be double-quoted; "" inside quotes is a
// literal quote. Surrounding whitespace of unquoted fields is trimmed.
std::vector<std::string> split_row(std::string_view line);

// Shortest representation that round-trips through parse_number.
std::string format_number(double v);

// Whole-field parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_number(std::string_view text);

std::string quote_if_needed(std::string_view field);

class Reader {
 public:
  // Throws Error(kParse) if the file cannot be opened or has no header.
  explicit Reader(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  // Index of a header column, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;

  // Next non-blank record; false at end of file.
  bool next(std::vector<std::string>& fields);
  // 1-based line number of the record most recently returned by next().
  std::size_t line_number() const { return line_no_; }

 private:
  std::ifstream in_;
  std::vector<std::string> header_;
  std::size_t line_no_ = 0;
};

}  // namespace carbonedge::csv
