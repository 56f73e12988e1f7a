#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace meow {

// FNV-1a 64-bit. Digests key the pipeline's artifact cache and the
// determinism checks; they are not cryptographic.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value);

// Digest of a string's bytes, as 16 hex chars.
std::string digest_string(std::string_view bytes);

// Digest of a file's contents; throws std::runtime_error if unreadable.
std::string digest_file(const std::string& path);

}  // namespace meow
