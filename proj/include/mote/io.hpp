#pragma once

#include "mote/types.hpp"

#include <cstdint>
#include <string>

namespace mote::io {

/// Write via temp file + rename so interrupted runs never leave a partial
/// artifact behind.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// FNV-1a 64-bit, used for config hashes in reports. Stable across
/// platforms, unlike std::hash.
std::uint64_t fnv1a64(const std::string& s);
std::string fnv1a64_hex(const std::string& s);

/// L x E matrix as "layer_id,expert_id,value" CSV (header included).
std::string matrix_to_csv(const MatX& m);
MatX matrix_from_csv(const std::string& text);

}  // namespace mote::io
