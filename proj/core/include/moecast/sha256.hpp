#pragma once

#include <cstddef>
#include <string>

namespace moecast {

// Lowercase hex SHA-256 digests, used for manifest input hashing.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
// Throws DataError when the file cannot be read.
std::string sha256_file(const std::string& path);

} // namespace moecast
