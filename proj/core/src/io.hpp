#pragma once

// Internal file helpers shared by the JSONL/CSV readers and writers.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotscope/errors.hpp"

namespace cotscope::io {

using json = nlohmann::json;

/// Calls fn(line_number, line) for every line; line numbers start at 1.
/// Blank lines are skipped but still counted.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, std::string_view)>& fn);

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// JSON serialization that keeps non-ASCII text as raw UTF-8 and never throws
/// on invalid sequences (they are replaced).
std::string dump(const json& j);

std::string csv_escape(std::string_view field);

/// RFC 4180 records (quoted fields may contain commas, quotes and newlines).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

/// Fixed "%.*g"-style formatting so emitted numbers are byte-stable.
std::string format_double(double v, int precision = 10);

}  // namespace cotscope::io
