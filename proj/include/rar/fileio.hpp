#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace rar {

// Throws kIoError, or kDiskFull when the device has no space left.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file, syncs it and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Appends one line and flushes. Used for audit logs and persistent caches.
void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace rar
