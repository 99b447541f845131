#include "formnet/hash.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "formnet/errors.hpp"

namespace formnet {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string content_hash(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

}  // namespace formnet
