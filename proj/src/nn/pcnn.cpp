#include "cd3net/pcnn.hpp"

#include <cmath>

#include "cd3net/errors.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

void ComplexTensor::validate() const {
  if (!re.defined() || !im.defined() || re.shape() != im.shape()) {
    throw InvalidArgument("ComplexTensor: real and imaginary parts differ in shape");
  }
}

PCLayer PCLayer::create(const ConvSpec& spec, std::mt19937_64& rng,
                        std::size_t fan_in) {
  spec.validate();
  if (fan_in == 0) fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1];
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto draw = [&] {
    std::vector<Real> w(spec.weight_count());
    for (auto& v : w) v = static_cast<Real>(dist(rng));
    return Tensor::from({spec.out_channels, spec.in_channels, spec.kernel[0],
                         spec.kernel[1]},
                        std::move(w), true);
  };
  PCLayer layer;
  layer.spec = spec;
  layer.weight_r = draw();
  layer.weight_i = draw();
  if (spec.bias) {
    layer.bias_r = Tensor::zeros({spec.out_channels}, true);
    layer.bias_i = Tensor::zeros({spec.out_channels}, true);
  }
  return layer;
}

void PCLayer::collect(const std::string& prefix,
                      std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight_r", weight_r});
  out.push_back({prefix + ".weight_i", weight_i});
  if (spec.bias) {
    out.push_back({prefix + ".bias_r", bias_r});
    out.push_back({prefix + ".bias_i", bias_i});
  }
}

PCBatchNorm PCBatchNorm::create(std::size_t channels, Real eps,
                                Real momentum) {
  PCBatchNorm bn;
  bn.gamma_r = Tensor::full({channels}, 1, true);
  bn.beta_r = Tensor::zeros({channels}, true);
  bn.gamma_i = Tensor::full({channels}, 1, true);
  bn.beta_i = Tensor::zeros({channels}, true);
  bn.state_r = BatchNormState(channels);
  bn.state_i = BatchNormState(channels);
  bn.eps = eps;
  bn.momentum = momentum;
  return bn;
}

void PCBatchNorm::collect(const std::string& prefix,
                          std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma_r", gamma_r});
  out.push_back({prefix + ".beta_r", beta_r});
  out.push_back({prefix + ".gamma_i", gamma_i});
  out.push_back({prefix + ".beta_i", beta_i});
}

void PCBatchNorm::collect_buffers(const std::string& prefix,
                                  std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".running_mean_r", &state_r.running_mean});
  out.push_back({prefix + ".running_var_r", &state_r.running_var});
  out.push_back({prefix + ".running_mean_i", &state_i.running_mean});
  out.push_back({prefix + ".running_var_i", &state_i.running_var});
}

ComplexTensor pc_apply(const PCLayer& layer, const ComplexTensor& z) {
  z.validate();
  const std::size_t out = layer.spec.out_channels;
  // One real convolution over [re; im] with the block weight
  //   [[W_r, -W_i], [W_i, W_r]]
  // evaluates both complex-product terms at once.
  Tensor top = concat({layer.weight_r, neg(layer.weight_i)}, 1);
  Tensor bottom = concat({layer.weight_i, layer.weight_r}, 1);
  Tensor weight = concat({top, bottom}, 0);
  Tensor bias;
  if (layer.spec.bias) {
    bias = concat({sub(layer.bias_r, layer.bias_i),
                   add(layer.bias_r, layer.bias_i)},
                  0);
  }
  ConvSpec fused = layer.spec;
  fused.in_channels *= 2;
  fused.out_channels *= 2;
  Tensor y = conv2d(concat_channels({z.re, z.im}), fused, weight, bias);
  return {slice_channels(y, 0, out), slice_channels(y, out, out)};
}

ComplexTensor pc_activation(const std::function<Tensor(const Tensor&)>& h,
                            const ComplexTensor& z) {
  return {h(z.re), h(z.im)};
}

ComplexTensor pc_leaky_relu(const ComplexTensor& z, Real slope) {
  return {leaky_relu(z.re, slope), leaky_relu(z.im, slope)};
}

ComplexTensor pc_batch_norm(const ComplexTensor& z, PCBatchNorm& bn,
                            Mode mode) {
  z.validate();
  return {batch_norm(z.re, bn.gamma_r, bn.beta_r, bn.state_r, mode, bn.eps,
                     bn.momentum),
          batch_norm(z.im, bn.gamma_i, bn.beta_i, bn.state_i, mode, bn.eps,
                     bn.momentum)};
}

ComplexTensor complex_add(const ComplexTensor& a, const ComplexTensor& b) {
  return {add(a.re, b.re), add(a.im, b.im)};
}

ComplexTensor complex_sub(const ComplexTensor& a, const ComplexTensor& b) {
  return {sub(a.re, b.re), sub(a.im, b.im)};
}

ComplexTensor complex_mul(const ComplexTensor& a, const ComplexTensor& b) {
  return {sub(mul(a.re, b.re), mul(a.im, b.im)),
          add(mul(a.re, b.im), mul(a.im, b.re))};
}

ComplexTensor complex_concat_channels(const std::vector<ComplexTensor>& zs) {
  if (zs.size() == 1) return zs.front();
  std::vector<Tensor> re, im;
  for (const auto& z : zs) {
    re.push_back(z.re);
    im.push_back(z.im);
  }
  return {concat_channels(re), concat_channels(im)};
}

ComplexTensor complex_slice_channels(const ComplexTensor& z, std::size_t start,
                                     std::size_t count) {
  return {slice_channels(z.re, start, count), slice_channels(z.im, start, count)};
}

std::size_t count_params(const PCLayer& layer) { return layer.param_count(); }

std::size_t count_params(const PCBatchNorm& bn) { return bn.param_count(); }

std::size_t count_params(const std::vector<NamedTensor>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor.size();
  return total;
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
