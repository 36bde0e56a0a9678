#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace nilm {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Parses a JSON document from disk; a syntax error becomes ParseError with
/// the byte offset in the message.
json read_json_file(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Fixed-point text with `decimals` digits after the point.
std::string format_fixed(double v, int decimals);

std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

std::int64_t now_ms();

}  // namespace nilm
