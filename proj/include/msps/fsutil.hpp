#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace msps {

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers see either the old file or the complete new one.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace msps
