#pragma once

// Differentiable operations over Tensor. No implicit broadcasting: binary
// elementwise operations require identical shapes; `expand` turns a scalar
// into a full tensor explicitly.

#include <array>
#include <cstddef>
#include <vector>

#include "cd3net/tensor.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, Real factor);
Tensor add_constant(const Tensor& x, Real offset);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
/// max(x, 0), with zero subgradient at 0.
Tensor relu(const Tensor& x);
/// y = x for x >= 0, slope * x otherwise. Subgradient at 0 is 1.
Tensor leaky_relu(const Tensor& x, Real slope);

// ---- reductions and shape ---------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Scalar to a tensor of `shape` filled with its value.
Tensor expand(const Tensor& scalar, const Shape& shape);
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);
/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Channel axis is 0 for [C,F,T] tensors and 1 for batched [B,C,F,T].
std::size_t channel_axis(const Tensor& x);
/// Concatenates along the channel axis. All spatial extents must agree.
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor slice_channels(const Tensor& x, std::size_t start, std::size_t count);

// ---- convolution --------------------------------------------------------------

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<std::size_t, 2> kernel{1, 1};
  std::array<std::size_t, 2> dilation{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
  bool bias = false;

  /// "Same" padding for an odd kernel with the given dilation.
  static ConvSpec same(std::size_t in, std::size_t out, std::size_t kernel,
                       std::size_t dilation, bool bias);

  void validate() const;
  std::size_t out_extent(std::size_t axis, std::size_t in_extent) const;
  std::size_t weight_count() const;
  std::size_t param_count() const;
};

/// Dilated stride-1 cross-correlation with zero padding.
/// x: [C_in,F,T] or [B,C_in,F,T]; weights: [C_out,C_in,k_f,k_t];
/// bias: [C_out] or undefined.
Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias = Tensor());

// ---- normalization ----------------------------------------------------------

enum class Mode { train, eval };

struct BatchNormState {
  std::vector<Real> running_mean;
  std::vector<Real> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, Real{0}), running_var(channels, Real{1}) {}
};

/// Per-channel normalization over every axis except the channel axis.
/// Train mode uses batch statistics and updates `state` by an exponential
/// moving average with `momentum` (unbiased variance); eval mode uses `state`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode, Real eps = Real(1e-5),
                  Real momentum = Real(0.1));

}  // namespace CD3NET_ABI
}  // namespace cd3net
