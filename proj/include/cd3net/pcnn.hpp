#pragma once

// Pseudocomplex layers: complex-valued semantics from pairs of real layers.
//
// A complex tensor is a (re, im) pair of identically shaped real tensors.
// A parameterized layer holds two real sublayers h_r, h_i of identical
// architecture and computes the complex product pattern
//   out.re = h_r(re) - h_i(im),   out.im = h_r(im) + h_i(re).
// Parameterless operations apply to each part separately.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cd3net/ops.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

struct ComplexTensor {
  Tensor re;
  Tensor im;

  const Shape& shape() const { return re.shape(); }
  /// Throws InvalidArgument when the parts differ in shape.
  void validate() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Non-trainable state (BN running statistics) exposed for serialization.
struct NamedBuffer {
  std::string name;
  std::vector<Real>* values;
};

struct PCLayer {
  ConvSpec spec;
  Tensor weight_r, weight_i;
  Tensor bias_r, bias_i;  // undefined when !spec.bias

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. `fan_in`
  /// defaults to in_channels * k_f * k_t.
  static PCLayer create(const ConvSpec& spec, std::mt19937_64& rng,
                        std::size_t fan_in = 0);

  std::size_t param_count() const { return 2 * spec.param_count(); }
  void collect(const std::string& prefix,
               std::vector<NamedTensor>& out) const;
};

struct PCBatchNorm {
  Tensor gamma_r, beta_r, gamma_i, beta_i;
  BatchNormState state_r, state_i;
  Real eps = Real(1e-5);
  Real momentum = Real(0.1);

  static PCBatchNorm create(std::size_t channels, Real eps, Real momentum);

  std::size_t channels() const { return gamma_r.size(); }
  std::size_t param_count() const { return 4 * channels(); }
  void collect(const std::string& prefix,
               std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix,
                       std::vector<NamedBuffer>& out);
};

ComplexTensor pc_apply(const PCLayer& layer, const ComplexTensor& z);

ComplexTensor pc_activation(const std::function<Tensor(const Tensor&)>& h,
                            const ComplexTensor& z);
ComplexTensor pc_leaky_relu(const ComplexTensor& z, Real slope);

/// Two independent real batch norms over the real and imaginary parts.
ComplexTensor pc_batch_norm(const ComplexTensor& z, PCBatchNorm& bn,
                            Mode mode);

// Elementwise complex arithmetic.
ComplexTensor complex_add(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor complex_sub(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor complex_mul(const ComplexTensor& a, const ComplexTensor& b);

ComplexTensor complex_concat_channels(const std::vector<ComplexTensor>& zs);
ComplexTensor complex_slice_channels(const ComplexTensor& z, std::size_t start,
                                     std::size_t count);

std::size_t count_params(const PCLayer& layer);
std::size_t count_params(const PCBatchNorm& bn);
std::size_t count_params(const std::vector<NamedTensor>& params);

}  // namespace CD3NET_ABI
}  // namespace cd3net
