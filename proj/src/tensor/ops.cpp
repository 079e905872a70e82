#include "cd3net/ops.hpp"

#include <cmath>
#include <string>

#include "cd3net/errors.hpp"
#include "blas.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " +
                          shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

// Unary elementwise op given value and derivative (in terms of x and y).
template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  const auto xs = x.data();
  std::vector<Real> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  Tensor y = make_op_result(x.shape(), std::move(out), {x}, nullptr);
  if (y.requires_grad()) {
    // The closure cannot hold `y` itself (cycle); it needs only x.
    auto* node = y.node().get();
    node->backward = [x, dfdx](std::span<const Real> g) {
      auto gx = grad_buffer(x);
      const auto xs = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xs[i]);
    };
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<Real> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] + bs[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const Real> g) {
                          if (a.requires_grad()) {
                            auto ga = grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              gb[i] += g[i];
                          }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<Real> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] - bs[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const Real> g) {
                          if (a.requires_grad()) {
                            auto ga = grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              gb[i] -= g[i];
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<Real> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] * bs[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const Real> g) {
                          if (a.requires_grad()) {
                            auto ga = grad_buffer(a);
                            const auto bs = b.data();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i] * bs[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = grad_buffer(b);
                            const auto as = a.data();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              gb[i] += g[i] * as[i];
                          }
                        });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<Real> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] / bs[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const Real> g) {
                          const auto as = a.data();
                          const auto bs = b.data();
                          if (a.requires_grad()) {
                            auto ga = grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i] / bs[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              gb[i] -= g[i] * as[i] / (bs[i] * bs[i]);
                          }
                        });
}

Tensor neg(const Tensor& x) { return scale(x, Real{-1}); }

Tensor scale(const Tensor& x, Real factor) {
  return unary(
      x, [factor](Real v) { return v * factor; },
      [factor](Real) { return factor; });
}

Tensor add_constant(const Tensor& x, Real offset) {
  return unary(
      x, [offset](Real v) { return v + offset; }, [](Real) { return Real{1}; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](Real v) { return std::log(v); }, [](Real v) { return 1 / v; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](Real v) { return v * v; }, [](Real v) { return 2 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](Real v) { return v > 0 ? v : Real{0}; },
      [](Real v) { return v > 0 ? Real{1} : Real{0}; });
}

Tensor leaky_relu(const Tensor& x, Real slope) {
  return unary(
      x, [slope](Real v) { return v >= 0 ? v : slope * v; },
      [slope](Real v) { return v >= 0 ? Real{1} : slope; });
}

Tensor sum(const Tensor& x) {
  // Extended accumulator: finite-difference checks and float training both
  // depend on reductions that do not drift with length.
  long double total = 0;
  for (Real v : x.data()) total += v;
  return make_op_result({}, {static_cast<Real>(total)}, {x}, [x](std::span<const Real> g) {
    auto gx = grad_buffer(x);
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw InvalidArgument("mean: empty tensor");
  return scale(sum(x), Real{1} / static_cast<Real>(x.size()));
}

Tensor expand(const Tensor& scalar, const Shape& shape) {
  if (scalar.size() != 1) {
    throw InvalidArgument("expand: expected a scalar, got " +
                          shape_str(scalar.shape()));
  }
  std::vector<Real> out(shape_size(shape), scalar.data()[0]);
  return make_op_result(shape, std::move(out), {scalar},
                        [scalar](std::span<const Real> g) {
                          long double total = 0;
                          for (Real v : g) total += v;
                          grad_buffer(scalar)[0] += static_cast<Real>(total);
                        });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_size(shape) != x.size()) {
    throw InvalidArgument("reshape: cannot view " + shape_str(x.shape()) +
                          " as " + shape_str(shape));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  return make_op_result(shape, std::move(out), {x},
                        [x](std::span<const Real> g) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            gx[i] += g[i];
                        });
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner) block sizes.
struct AxisBlocks {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisBlocks blocks(const Shape& shape, std::size_t axis) {
  AxisBlocks b;
  for (std::size_t i = 0; i < axis; ++i) b.outer *= shape[i];
  b.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) b.inner *= shape[i];
  return b;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw InvalidArgument("concat: no inputs");
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) {
    throw InvalidArgument("concat: axis out of range for " +
                          shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) {
      throw InvalidArgument("concat: incompatible shapes " + shape_str(first) +
                            " and " + shape_str(s));
    }
    out_shape[axis] += s[axis];
  }
  const AxisBlocks ob = blocks(out_shape, axis);
  std::vector<Real> out(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    offsets.push_back(offset);
    const std::size_t chunk = x.shape()[axis] * ob.inner;
    const auto src = x.data();
    for (std::size_t o = 0; o < ob.outer; ++o) {
      std::copy_n(src.begin() + o * chunk, chunk,
                  out.begin() + o * ob.extent * ob.inner + offset * ob.inner);
    }
    offset += x.shape()[axis];
  }
  return make_op_result(
      out_shape, std::move(out), xs,
      [xs, offsets, ob, axis](std::span<const Real> g) {
        for (std::size_t k = 0; k < xs.size(); ++k) {
          if (!xs[k].requires_grad()) continue;
          auto gx = grad_buffer(xs[k]);
          const std::size_t chunk = xs[k].shape()[axis] * ob.inner;
          for (std::size_t o = 0; o < ob.outer; ++o) {
            const Real* src =
                g.data() + o * ob.extent * ob.inner + offsets[k] * ob.inner;
            Real* dst = gx.data() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
      });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length) {
  const Shape& shape = x.shape();
  if (axis >= shape.size() || start + length > shape[axis]) {
    throw InvalidArgument("slice: range [" + std::to_string(start) + ", " +
                          std::to_string(start + length) +
                          ") out of bounds for " + shape_str(shape));
  }
  Shape out_shape = shape;
  out_shape[axis] = length;
  const AxisBlocks ib = blocks(shape, axis);
  const std::size_t chunk = length * ib.inner;
  std::vector<Real> out(shape_size(out_shape));
  const auto src = x.data();
  for (std::size_t o = 0; o < ib.outer; ++o) {
    std::copy_n(src.begin() + o * ib.extent * ib.inner + start * ib.inner,
                chunk, out.begin() + o * chunk);
  }
  return make_op_result(out_shape, std::move(out), {x},
                        [x, ib, start, chunk](std::span<const Real> g) {
                          auto gx = grad_buffer(x);
                          for (std::size_t o = 0; o < ib.outer; ++o) {
                            Real* dst = gx.data() + o * ib.extent * ib.inner +
                                        start * ib.inner;
                            const Real* src = g.data() + o * chunk;
                            for (std::size_t i = 0; i < chunk; ++i)
                              dst[i] += src[i];
                          }
                        });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw InvalidArgument("matmul: incompatible shapes " +
                          shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n, Real{0});
  blas::gemm(false, false, m, n, k, Real{1}, a.data().data(), b.data().data(),
             Real{0}, out.data());
  return make_op_result({m, n}, std::move(out), {a, b},
                        [a, b, m, n, k](std::span<const Real> g) {
                          if (a.requires_grad()) {
                            blas::gemm(false, true, m, k, n, Real{1}, g.data(),
                                       b.data().data(), Real{1},
                                       grad_buffer(a).data());
                          }
                          if (b.requires_grad()) {
                            blas::gemm(true, false, k, n, m, Real{1},
                                       a.data().data(), g.data(), Real{1},
                                       grad_buffer(b).data());
                          }
                        });
}

std::size_t channel_axis(const Tensor& x) {
  if (x.rank() == 3) return 0;
  if (x.rank() == 4) return 1;
  throw InvalidArgument("expected a [C,F,T] or [B,C,F,T] tensor, got " +
                        shape_str(x.shape()));
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InvalidArgument("concat_channels: no inputs");
  return concat(xs, channel_axis(xs.front()));
}

Tensor slice_channels(const Tensor& x, std::size_t start, std::size_t count) {
  return slice(x, channel_axis(x), start, count);
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
