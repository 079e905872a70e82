#include "cd3net/blocks.hpp"

#include <cmath>

#include "cd3net/errors.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

void check_channels(const ComplexTensor& z, std::size_t expected,
                    const char* what) {
  z.validate();
  const std::size_t rank = z.re.rank();
  if (rank != 3 && rank != 4) {
    throw InvalidArgument(std::string(what) + ": expected [C,F,K] or [B,C,F,K], got " +
                          shape_str(z.shape()));
  }
  const std::size_t c = z.shape()[channel_axis(z.re)];
  if (c != expected) {
    throw InvalidArgument(std::string(what) + ": expected " +
                          std::to_string(expected) + " channels, got " +
                          std::to_string(c));
  }
}

void scale_rows(Tensor& w, std::size_t row_begin, std::size_t row_count,
                Real factor) {
  const std::size_t per_row = w.size() / w.dim(0);
  auto data = w.mutable_data();
  for (std::size_t i = row_begin * per_row; i < (row_begin + row_count) * per_row; ++i) {
    data[i] *= factor;
  }
}

}  // namespace

BncBlock BncBlock::create(std::size_t in_channels, std::size_t out_channels,
                          Real bn_eps, Real bn_momentum, std::mt19937_64& rng) {
  BncBlock b;
  b.bn = PCBatchNorm::create(in_channels, bn_eps, bn_momentum);
  b.conv = PCLayer::create(ConvSpec::same(in_channels, out_channels, 3, 1, true), rng);
  return b;
}

D2Block D2Block::create(std::size_t in_channels, std::size_t layers,
                        std::size_t growth, std::size_t kernel, Real bn_eps,
                        Real bn_momentum, std::mt19937_64& rng) {
  if (in_channels == 0 || layers == 0 || growth == 0) {
    throw InvalidArgument("D2Block: in_channels, layers and growth must be >= 1");
  }
  D2Block b;
  b.in_channels = in_channels;
  b.layers = layers;
  b.growth = growth;
  b.kernel = kernel;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t group_in = i == 0 ? in_channels : growth;
    const std::size_t consumers = layers - i;
    PCLayer conv = PCLayer::create(
        ConvSpec::same(group_in, consumers * growth, kernel, std::size_t(1) << i, false),
        rng, 1);
    // Output slice s belongs to layer i+1+s, whose full fan-in spans the
    // block input plus i+s earlier layer outputs.
    for (std::size_t s = 0; s < consumers; ++s) {
      const std::size_t fan_in = (in_channels + (i + s) * growth) * kernel * kernel;
      const Real bound = Real(1) / std::sqrt(Real(fan_in));
      scale_rows(conv.weight_r, s * growth, growth, bound);
      scale_rows(conv.weight_i, s * growth, growth, bound);
    }
    b.group_convs.push_back(std::move(conv));
    b.norms.push_back(PCBatchNorm::create(growth, bn_eps, bn_momentum));
  }
  return b;
}

std::size_t D2Block::param_count() const {
  std::size_t total = 0;
  for (const auto& c : group_convs) total += c.param_count();
  for (const auto& n : norms) total += n.param_count();
  return total;
}

D3Block D3Block::create(std::size_t in_channels, const D3Spec& spec,
                        Real bn_eps, Real bn_momentum, std::mt19937_64& rng) {
  if (spec.num_d2 == 0) throw InvalidArgument("D3Block: num_d2 must be >= 1");
  D3Block b;
  b.in_channels = in_channels;
  std::size_t c = in_channels;
  for (std::size_t m = 0; m < spec.num_d2; ++m) {
    b.d2.push_back(D2Block::create(c, spec.d2_layers, spec.growth, spec.kernel,
                                   bn_eps, bn_momentum, rng));
    c += b.d2.back().out_channels();
  }
  return b;
}

std::size_t D3Block::out_channels() const {
  std::size_t total = 0;
  for (const auto& b : d2) total += b.out_channels();
  return total;
}

std::size_t D3Block::param_count() const {
  std::size_t total = 0;
  for (const auto& b : d2) total += b.param_count();
  return total;
}

ComplexTensor bnc_forward(const ComplexTensor& z, BncBlock& block, Mode mode,
                          Real slope) {
  check_channels(z, block.bn.channels(), "bnc_forward");
  ComplexTensor h = pc_batch_norm(z, block.bn, mode);
  h = pc_apply(block.conv, h);
  return pc_leaky_relu(h, slope);
}

ComplexTensor d2_forward(const ComplexTensor& z, D2Block& block, Mode mode,
                         Real slope) {
  check_channels(z, block.in_channels, "d2_forward");
  const std::size_t g = block.growth;
  const std::size_t L = block.layers;
  std::vector<ComplexTensor> group_out;  // group_out[i]: (L-i)*g channels
  std::vector<ComplexTensor> outputs;
  group_out.push_back(pc_apply(block.group_convs[0], z));
  for (std::size_t l = 1; l <= L; ++l) {
    ComplexTensor pre;
    for (std::size_t i = 0; i < l; ++i) {
      ComplexTensor part =
          group_out[i].re.dim(channel_axis(group_out[i].re)) == g
              ? group_out[i]
              : complex_slice_channels(group_out[i], (l - 1 - i) * g, g);
      pre = i == 0 ? part : complex_add(pre, part);
    }
    ComplexTensor x = pc_leaky_relu(pc_batch_norm(pre, block.norms[l - 1], mode), slope);
    if (l < L) group_out.push_back(pc_apply(block.group_convs[l], x));
    outputs.push_back(std::move(x));
  }
  return complex_concat_channels(outputs);
}

ComplexTensor d3_forward(const ComplexTensor& z, D3Block& block, Mode mode,
                         Real slope) {
  check_channels(z, block.in_channels, "d3_forward");
  std::vector<ComplexTensor> outputs;
  for (std::size_t m = 0; m < block.d2.size(); ++m) {
    std::vector<ComplexTensor> parts{z};
    parts.insert(parts.end(), outputs.begin(), outputs.end());
    ComplexTensor in = complex_concat_channels(parts);
    outputs.push_back(d2_forward(in, block.d2[m], mode, slope));
  }
  return complex_concat_channels(outputs);
}

Cd3Net::Cd3Net(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.init_seed);
  bnc = BncBlock::create(config_.input_channels, config_.bnc_out, config_.bn_eps,
                         config_.bn_momentum, rng);
  std::size_t c = config_.bnc_out;
  for (const D3Spec& spec : config_.d3_blocks) {
    d3.push_back(D3Block::create(c, spec, config_.bn_eps, config_.bn_momentum, rng));
    transitions.push_back(PCLayer::create(
        ConvSpec::same(d3.back().out_channels(), spec.transition, 1, 1, true), rng));
    c = spec.transition;
  }
  final_conv = PCLayer::create(config_.final_conv(), rng);
  if (config_.identity_mask_init) {
    for (Tensor* w : {&final_conv.weight_r, &final_conv.weight_i}) {
      scale_rows(*w, 0, w->dim(0), Real(0.1));
    }
    // Bias pair (b_r, b_i) enters as b_r - b_i (real) and b_r + b_i (imag).
    final_conv.bias_r.mutable_data()[0] = Real(0.5);
    final_conv.bias_i.mutable_data()[0] = Real(-0.5);
  }
}

MaskPair Cd3Net::forward(const ComplexTensor& x, Mode mode) {
  check_channels(x, config_.input_channels, "cd3net_forward");
  const Real slope = config_.leaky_slope;
  ComplexTensor h = bnc_forward(x, bnc, mode, slope);
  for (std::size_t b = 0; b < d3.size(); ++b) {
    h = d3_forward(h, d3[b], mode, slope);
    h = pc_leaky_relu(pc_apply(transitions[b], h), slope);
  }
  ComplexTensor masks = pc_apply(final_conv, h);
  MaskPair out;
  if (config_.mask_mode == MaskMode::single) {
    out.a = masks;
  } else {
    out.a = complex_slice_channels(masks, 0, 1);
    out.b = complex_slice_channels(masks, 1, 1);
  }
  return out;
}

std::vector<NamedTensor> Cd3Net::parameters() const {
  std::vector<NamedTensor> out;
  bnc.bn.collect("bnc.bn", out);
  bnc.conv.collect("bnc.conv", out);
  for (std::size_t b = 0; b < d3.size(); ++b) {
    const std::string p = "d3." + std::to_string(b);
    for (std::size_t m = 0; m < d3[b].d2.size(); ++m) {
      const D2Block& d2 = d3[b].d2[m];
      const std::string q = p + ".d2." + std::to_string(m);
      for (std::size_t l = 0; l < d2.layers; ++l) {
        d2.group_convs[l].collect(q + ".conv" + std::to_string(l), out);
        d2.norms[l].collect(q + ".bn" + std::to_string(l), out);
      }
    }
    transitions[b].collect(p + ".transition", out);
  }
  final_conv.collect("final", out);
  return out;
}

std::vector<NamedBuffer> Cd3Net::buffers() {
  std::vector<NamedBuffer> out;
  bnc.bn.collect_buffers("bnc.bn", out);
  for (std::size_t b = 0; b < d3.size(); ++b) {
    for (std::size_t m = 0; m < d3[b].d2.size(); ++m) {
      D2Block& d2 = d3[b].d2[m];
      const std::string q = "d3." + std::to_string(b) + ".d2." + std::to_string(m);
      for (std::size_t l = 0; l < d2.layers; ++l) {
        d2.norms[l].collect_buffers(q + ".bn" + std::to_string(l), out);
      }
    }
  }
  return out;
}

std::size_t Cd3Net::param_count() const {
  std::size_t total = bnc.param_count() + final_conv.param_count();
  for (const auto& b : d3) total += b.param_count();
  for (const auto& t : transitions) total += t.param_count();
  return total;
}

MaskPair cd3net_forward(const ComplexTensor& x, Cd3Net& net, Mode mode) {
  return net.forward(x, mode);
}

std::size_t count_params(const NetConfig& config) {
  config.validate();
  auto pc_conv = [](std::size_t in, std::size_t out, std::size_t k, bool bias) {
    return 2 * (in * out * k * k + (bias ? out : 0));
  };
  std::size_t total = 4 * config.input_channels +
                      pc_conv(config.input_channels, config.bnc_out, 3, true);
  std::size_t c = config.bnc_out;
  for (const D3Spec& d : config.d3_blocks) {
    std::size_t produced = 0;
    for (std::size_t m = 0; m < d.num_d2; ++m) {
      const std::size_t d2_in = c + produced;
      for (std::size_t l = 0; l < d.d2_layers; ++l) {
        total += pc_conv(d2_in + l * d.growth, d.growth, d.kernel, false) + 4 * d.growth;
      }
      produced += d.d2_layers * d.growth;
    }
    total += pc_conv(produced, d.transition, 1, true);
    c = d.transition;
  }
  return total + pc_conv(c, config.mask_channels(), config.final_kernel, true);
}

Extent compose_extent(Extent a, Extent b) {
  return {a[0] + b[0] - 1, a[1] + b[1] - 1};
}

Extent receptive_field_conv(const ConvSpec& spec) {
  return {1 + (spec.kernel[0] - 1) * spec.dilation[0],
          1 + (spec.kernel[1] - 1) * spec.dilation[1]};
}

Extent receptive_field_d2(std::size_t layers, std::size_t kernel) {
  // The longest path runs through every layer; layer l applies dilation
  // 2^(l-1) to the output of layer l-1.
  const std::size_t r = 1 + (kernel - 1) * ((std::size_t(1) << layers) - 1);
  return {r, r};
}

Extent receptive_field_d3(const D3Spec& spec) {
  Extent r{1, 1};
  for (std::size_t m = 0; m < spec.num_d2; ++m) {
    r = compose_extent(r, receptive_field_d2(spec.d2_layers, spec.kernel));
  }
  return r;
}

Extent receptive_field(const NetConfig& config) {
  Extent r = {3, 3};
  for (const D3Spec& d : config.d3_blocks) r = compose_extent(r, receptive_field_d3(d));
  return compose_extent(r, {config.final_kernel, config.final_kernel});
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
