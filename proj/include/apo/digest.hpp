#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace apo::digest {

// SHA-1 of a byte string, lowercase hex.
std::string sha1_hex(std::string_view data);

// Git blob hash: sha1("blob <len>\0" + content), lowercase hex.
std::string git_blob_sha1_hex(std::string_view content);

// FNV-1a 64-bit, for cheap in-process hashing.
uint64_t fnv1a64(std::string_view data);

}  // namespace apo::digest
