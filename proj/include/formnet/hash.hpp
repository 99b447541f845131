#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace formnet {

/// FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes);

/// Content hash rendered as "fnv1a:<16 hex digits>". Used for pipeline
/// provenance records.
std::string content_hash(std::string_view bytes);

/// Hash of a file's raw bytes. Throws IoError if unreadable.
std::string file_hash(const std::string& path);

}  // namespace formnet
