#include <algorithm>
#include <string>

#include "cd3net/errors.hpp"
#include "cd3net/ops.hpp"
#include "blas.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

ConvSpec ConvSpec::same(std::size_t in, std::size_t out, std::size_t kernel,
                        std::size_t dilation, bool bias) {
  ConvSpec spec;
  spec.in_channels = in;
  spec.out_channels = out;
  spec.kernel = {kernel, kernel};
  spec.dilation = {dilation, dilation};
  const std::size_t pad = dilation * (kernel - 1) / 2;
  spec.padding = {pad, pad};
  spec.bias = bias;
  return spec;
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel[0] == 0 ||
      kernel[1] == 0 || dilation[0] == 0 || dilation[1] == 0) {
    throw InvalidArgument(
        "ConvSpec: channel counts, kernel extents and dilations must be >= 1");
  }
}

std::size_t ConvSpec::out_extent(std::size_t axis,
                                 std::size_t in_extent) const {
  const long long extent = static_cast<long long>(in_extent) +
                           2 * static_cast<long long>(padding[axis]) -
                           static_cast<long long>(dilation[axis]) *
                               static_cast<long long>(kernel[axis] - 1);
  if (extent < 1) {
    throw InvalidArgument("conv2d: output extent " + std::to_string(extent) +
                          " < 1 on axis " + std::to_string(axis));
  }
  return static_cast<std::size_t>(extent);
}

std::size_t ConvSpec::weight_count() const {
  return out_channels * in_channels * kernel[0] * kernel[1];
}

std::size_t ConvSpec::param_count() const {
  return weight_count() + (bias ? out_channels : 0);
}

namespace {

struct Geometry {
  std::size_t channels, f_in, t_in, f_out, t_out;
  std::size_t kf, kt, df, dt, pf, pt;

  std::size_t rows() const { return channels * kf * kt; }
  std::size_t cols() const { return f_out * t_out; }
};

// Valid output range [lo, hi) on one axis for kernel tap `tap`.
inline void valid_range(std::size_t out_extent, std::size_t in_extent,
                        std::size_t tap_offset, std::size_t pad,
                        std::size_t& lo, std::size_t& hi) {
  // input index = out + tap_offset - pad, must lie in [0, in_extent).
  const long long shift =
      static_cast<long long>(tap_offset) - static_cast<long long>(pad);
  long long l = std::max<long long>(0, -shift);
  long long h = std::min<long long>(static_cast<long long>(out_extent),
                                    static_cast<long long>(in_extent) - shift);
  if (h < l) h = l;
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

void im2col(const Geometry& g, const Real* x, Real* cols) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const Real* xc = x + c * g.f_in * g.t_in;
    for (std::size_t i = 0; i < g.kf; ++i) {
      std::size_t f_lo, f_hi;
      valid_range(g.f_out, g.f_in, i * g.df, g.pf, f_lo, f_hi);
      for (std::size_t j = 0; j < g.kt; ++j, ++row) {
        std::size_t t_lo, t_hi;
        valid_range(g.t_out, g.t_in, j * g.dt, g.pt, t_lo, t_hi);
        Real* dst = cols + row * g.cols();
        std::fill(dst, dst + g.cols(), Real{0});
        for (std::size_t fo = f_lo; fo < f_hi; ++fo) {
          const Real* src = xc + (fo + i * g.df - g.pf) * g.t_in;
          Real* d = dst + fo * g.t_out;
          for (std::size_t to = t_lo; to < t_hi; ++to) {
            d[to] = src[to + j * g.dt - g.pt];
          }
        }
      }
    }
  }
}

void col2im(const Geometry& g, const Real* cols, Real* x) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    Real* xc = x + c * g.f_in * g.t_in;
    for (std::size_t i = 0; i < g.kf; ++i) {
      std::size_t f_lo, f_hi;
      valid_range(g.f_out, g.f_in, i * g.df, g.pf, f_lo, f_hi);
      for (std::size_t j = 0; j < g.kt; ++j, ++row) {
        std::size_t t_lo, t_hi;
        valid_range(g.t_out, g.t_in, j * g.dt, g.pt, t_lo, t_hi);
        const Real* src = cols + row * g.cols();
        for (std::size_t fo = f_lo; fo < f_hi; ++fo) {
          Real* dst = xc + (fo + i * g.df - g.pf) * g.t_in;
          const Real* s = src + fo * g.t_out;
          for (std::size_t to = t_lo; to < t_hi; ++to) {
            dst[to + j * g.dt - g.pt] += s[to];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias) {
  spec.validate();
  const bool batched = x.rank() == 4;
  if (x.rank() != 3 && !batched) {
    throw InvalidArgument("conv2d: expected [C,F,T] or [B,C,F,T] input, got " +
                          shape_str(x.shape()));
  }
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  if (x.dim(off) != spec.in_channels) {
    throw InvalidArgument("conv2d: input has " + std::to_string(x.dim(off)) +
                          " channels, spec expects " +
                          std::to_string(spec.in_channels));
  }
  const Shape wshape{spec.out_channels, spec.in_channels, spec.kernel[0],
                     spec.kernel[1]};
  if (weights.shape() != wshape) {
    throw InvalidArgument("conv2d: weights shaped " +
                          shape_str(weights.shape()) + ", expected " +
                          shape_str(wshape));
  }
  if (bias.defined() && bias.shape() != Shape{spec.out_channels}) {
    throw InvalidArgument("conv2d: bias shaped " + shape_str(bias.shape()) +
                          ", expected [" + std::to_string(spec.out_channels) +
                          "]");
  }

  Geometry g{};
  g.channels = spec.in_channels;
  g.f_in = x.dim(off + 1);
  g.t_in = x.dim(off + 2);
  g.f_out = spec.out_extent(0, g.f_in);
  g.t_out = spec.out_extent(1, g.t_in);
  g.kf = spec.kernel[0];
  g.kt = spec.kernel[1];
  g.df = spec.dilation[0];
  g.dt = spec.dilation[1];
  g.pf = spec.padding[0];
  g.pt = spec.padding[1];

  const std::size_t oc = spec.out_channels;
  const std::size_t in_item = g.channels * g.f_in * g.t_in;
  const std::size_t out_item = oc * g.cols();
  std::vector<Real> out(batch * out_item);
  std::vector<Real> cols(g.rows() * g.cols());
  const Real* w = weights.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(g, x.data().data() + b * in_item, cols.data());
    Real* y = out.data() + b * out_item;
    if (bias.defined()) {
      const auto bs = bias.data();
      for (std::size_t o = 0; o < oc; ++o) {
        std::fill(y + o * g.cols(), y + (o + 1) * g.cols(), bs[o]);
      }
    }
    blas::gemm(false, false, oc, g.cols(), g.rows(), Real{1}, w, cols.data(),
               bias.defined() ? Real{1} : Real{0}, y);
  }

  Shape out_shape = batched ? Shape{batch, oc, g.f_out, g.t_out}
                            : Shape{oc, g.f_out, g.t_out};
  std::vector<Tensor> parents{x, weights};
  if (bias.defined()) parents.push_back(bias);
  return make_op_result(
      std::move(out_shape), std::move(out), parents,
      [x, weights, bias, g, batch, in_item, out_item,
       oc](std::span<const Real> grad) {
        std::vector<Real> cols(g.rows() * g.cols());
        const bool need_x = x.requires_grad();
        const bool need_w = weights.requires_grad();
        std::span<Real> gw = need_w ? grad_buffer(weights) : std::span<Real>();
        std::span<Real> gx = need_x ? grad_buffer(x) : std::span<Real>();
        for (std::size_t b = 0; b < batch; ++b) {
          const Real* gy = grad.data() + b * out_item;
          if (need_w) {
            im2col(g, x.data().data() + b * in_item, cols.data());
            blas::gemm(false, true, oc, g.rows(), g.cols(), Real{1}, gy,
                       cols.data(), Real{1}, gw.data());
          }
          if (need_x) {
            blas::gemm(true, false, g.rows(), g.cols(), oc, Real{1},
                       weights.data().data(), gy, Real{0}, cols.data());
            col2im(g, cols.data(), gx.data() + b * in_item);
          }
        }
        if (bias.defined() && bias.requires_grad()) {
          auto gb = grad_buffer(bias);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < oc; ++o) {
              const Real* gy = grad.data() + b * out_item + o * g.cols();
              Real total = 0;
              for (std::size_t p = 0; p < g.cols(); ++p) total += gy[p];
              gb[o] += total;
            }
          }
        }
      });
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
