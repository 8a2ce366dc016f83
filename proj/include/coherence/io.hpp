#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace coherence::io {

/// Shortest decimal text that parses back to the same double (17 significant
/// digits).
std::string format_double(double value);

/// Splits one CSV line on commas and trims surrounding whitespace.
std::vector<std::string> split_csv_line(std::string_view line);

/// Strict full-string parse; returns false on trailing garbage or empty input.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace coherence::io
