#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace volaxiom {

// Shortest representation that round-trips through parse_double.
std::string format_double(double x);
double parse_double(const std::string& s);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

// 64-bit FNV-1a, hex-encoded. Used for content hashes in run manifests.
std::string fnv1a_hex(const std::string& bytes);
std::uint64_t fnv1a(const std::string& bytes);

} // namespace volaxiom
