#pragma once

// D2 / D3 / BNC building blocks and the assembled cD3Net.

#include <array>
#include <optional>
#include <random>
#include <vector>

#include "cd3net/config.hpp"
#include "cd3net/pcnn.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

struct BncBlock {
  PCBatchNorm bn;
  PCLayer conv;

  static BncBlock create(std::size_t in_channels, std::size_t out_channels,
                         Real bn_eps, Real bn_momentum, std::mt19937_64& rng);
  std::size_t param_count() const {
    return bn.param_count() + conv.param_count();
  }
};

// Layer l (1-based) of a D2 block convolves channel group i of its input
// (group 0 is the block input, group i >= 1 the output of layer i) with
// dilation 2^i. Since group i is seen by every layer l > i under the same
// dilation, the block keeps one convolution per group whose output
// channels hold the contributions to layers i+1..L, g channels each.
struct D2Block {
  std::size_t in_channels = 0;
  std::size_t layers = 0;
  std::size_t growth = 0;
  std::size_t kernel = 3;
  std::vector<PCLayer> group_convs;  // L entries, no bias
  std::vector<PCBatchNorm> norms;    // L entries, g channels

  static D2Block create(std::size_t in_channels, std::size_t layers,
                        std::size_t growth, std::size_t kernel, Real bn_eps,
                        Real bn_momentum, std::mt19937_64& rng);
  std::size_t out_channels() const { return layers * growth; }
  std::size_t param_count() const;
};

struct D3Block {
  std::size_t in_channels = 0;
  std::vector<D2Block> d2;

  static D3Block create(std::size_t in_channels, const D3Spec& spec,
                        Real bn_eps, Real bn_momentum, std::mt19937_64& rng);
  std::size_t out_channels() const;
  std::size_t param_count() const;
};

ComplexTensor bnc_forward(const ComplexTensor& z, BncBlock& block, Mode mode,
                          Real slope);
ComplexTensor d2_forward(const ComplexTensor& z, D2Block& block, Mode mode,
                         Real slope);
ComplexTensor d3_forward(const ComplexTensor& z, D3Block& block, Mode mode,
                         Real slope);

/// Complex masks in [.., 1, F, K] layout; `b` is set in dual mode only.
struct MaskPair {
  ComplexTensor a;
  std::optional<ComplexTensor> b;
};

class Cd3Net {
 public:
  explicit Cd3Net(NetConfig config);

  /// x: [4, F, K] or [B, 4, F, K] complex input. Masks keep F x K.
  MaskPair forward(const ComplexTensor& x, Mode mode);

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedBuffer> buffers();
  std::size_t param_count() const;
  const NetConfig& config() const { return config_; }

  BncBlock bnc;
  std::vector<D3Block> d3;
  std::vector<PCLayer> transitions;
  PCLayer final_conv;

 private:
  NetConfig config_;
};

MaskPair cd3net_forward(const ComplexTensor& x, Cd3Net& net, Mode mode);

/// Trainable parameter count of a configuration, computed without building
/// the network.
std::size_t count_params(const NetConfig& config);

/// Analytic receptive field extents (frequency, time).
using Extent = std::array<std::size_t, 2>;
Extent compose_extent(Extent a, Extent b);
Extent receptive_field_conv(const ConvSpec& spec);
Extent receptive_field_d2(std::size_t layers, std::size_t kernel);
Extent receptive_field_d3(const D3Spec& spec);
Extent receptive_field(const NetConfig& config);

}  // namespace CD3NET_ABI
}  // namespace cd3net
