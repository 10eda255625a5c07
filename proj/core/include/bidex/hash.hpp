#pragma once

#include <string>

namespace bidex {

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(const std::string& bytes);

/// Hash of a file's contents; throws std::runtime_error when unreadable.
std::string sha256_file(const std::string& path);

}  // namespace bidex
