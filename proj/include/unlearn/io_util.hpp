#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace unlearn {

std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temp file and renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// FNV-1a over the raw bytes; used to fingerprint run inputs in manifests.
std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

// snprintf "%.9g" -- the float format used by all CSV output.
std::string format_g9(double x);

}  // namespace unlearn
