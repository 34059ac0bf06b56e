#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mft {

// Writes to a sibling temp file, then renames it over `path`, so readers see
// either the old file or the complete new one.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

// Whole-file read; throws InputError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

}  // namespace mft
