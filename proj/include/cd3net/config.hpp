#pragma once

// Architectural description of a cD3Net instance, stored as flat
// `key = value` text with `#` comments:
//
//   input_channels = 4
//   mask_mode = dual            # single | dual
//   bnc_out = 32
//   d3_blocks = 2
//   d3.0.num_d2 = 3             # D2 blocks per D3 block (M)
//   d3.0.layers = 4             # layers per D2 block (L)
//   d3.0.growth = 10            # channels per layer (g)
//   d3.0.kernel = 3
//   d3.0.transition = 48        # 1x1 compression after the D3 block
//   ...
//   final_kernel = 3
//   leaky_slope = 0.01
//   bn_eps = 1e-5
//   bn_momentum = 0.1
//   init_seed = 0
//   mask_init = identity        # identity | random

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cd3net/ops.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

enum class MaskMode { single, dual };

struct D3Spec {
  std::size_t num_d2 = 1;
  std::size_t d2_layers = 1;
  std::size_t growth = 1;
  std::size_t kernel = 3;
  std::size_t transition = 1;
};

struct NetConfig {
  std::size_t input_channels = 4;
  MaskMode mask_mode = MaskMode::dual;
  std::size_t bnc_out = 32;
  std::vector<D3Spec> d3_blocks;
  std::size_t final_kernel = 3;
  Real leaky_slope = Real(0.01);
  Real bn_eps = Real(1e-5);
  Real bn_momentum = Real(0.1);
  std::uint64_t init_seed = 0;
  // Final-layer bias starts at A = 1, B = 0 with down-scaled weights, so an
  // untrained network is close to a pass-through.
  bool identity_mask_init = true;

  std::size_t mask_channels() const {
    return mask_mode == MaskMode::dual ? 2 : 1;
  }
  /// Channels entering the final mask convolution.
  std::size_t trunk_channels() const;
  ConvSpec final_conv() const;

  void validate() const;

  static NetConfig parse(const std::string& text);
  static NetConfig load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
};

/// Parses flat `key = value` text; `#` starts a comment. Duplicate keys and
/// malformed lines are errors.
std::vector<std::pair<std::string, std::string>> parse_key_values(
    const std::string& text);

}  // namespace CD3NET_ABI
}  // namespace cd3net
