#pragma once

// A saved model is a directory:
//   config.cfg    network configuration
//   params.bin    every parameter and BN buffer, back to back, native-endian
//   manifest.txt  one line per array: name, kind, shape, offset, count, FNV-1a
// Arrays are stored in the precision of the writing library and converted on
// load when the reader's precision differs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "cd3net/blocks.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

std::uint64_t fnv1a(std::span<const unsigned char> bytes);

void save_model(const std::filesystem::path& dir, Cd3Net& net);

/// Throws NotFound for missing files and InvalidData for manifest, shape or
/// checksum mismatches.
Cd3Net load_model(const std::filesystem::path& dir);

/// Copies parameters and buffers between networks of identical layout.
void copy_weights(Cd3Net& from, Cd3Net& to);

}  // namespace CD3NET_ABI
}  // namespace cd3net
