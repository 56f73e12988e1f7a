#include "meow/digest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace meow {

std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string digest_string(std::string_view bytes) { return to_hex(fnv1a64(bytes)); }

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file for digest: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return digest_string(buffer.str());
}

}  // namespace meow
