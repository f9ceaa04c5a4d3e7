#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace kinscope {

std::string read_text_file(const std::filesystem::path& path);

/// Writes `<path>.partial` first and renames it into place once complete, so
/// an interrupted run leaves only clearly marked partial files behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest round-trip decimal form (always at least 9 significant digits of
/// precision are preserved).
std::string format_double(double value);

}  // namespace kinscope
