#ifndef ATLAS_CHECKSUM_HPP
#define ATLAS_CHECKSUM_HPP

#include <cstddef>
#include <filesystem>
#include <string>

#include "atlas/tensor.hpp"

namespace atlas {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& bytes);

/// Digest of the little-endian float64 payload of `v`.
std::string sha256_hex(const Vector& v);

std::string sha256_file(const std::filesystem::path& path);

} // namespace atlas

#endif // ATLAS_CHECKSUM_HPP
