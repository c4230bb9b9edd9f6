#pragma once

#include <filesystem>
#include <string>

namespace cimq {

// lowercase hex SHA-256
std::string sha256_bytes(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace cimq
