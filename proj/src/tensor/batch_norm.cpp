#include <cmath>
#include <string>

#include "cd3net/errors.hpp"
#include "cd3net/ops.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode, Real eps, Real momentum) {
  if (!(eps > 0)) throw InvalidArgument("batch_norm: eps must be positive");
  const std::size_t axis = channel_axis(x);
  const std::size_t channels = x.dim(axis);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw InvalidArgument("batch_norm: gamma/beta must be [" +
                          std::to_string(channels) + "]");
  }
  if (state.running_mean.size() != channels ||
      state.running_var.size() != channels) {
    throw InvalidArgument("batch_norm: running statistics sized for " +
                          std::to_string(state.running_mean.size()) +
                          " channels, input has " + std::to_string(channels));
  }
  const std::size_t batch = axis == 1 ? x.dim(0) : 1;
  const std::size_t plane = x.dim(axis + 1) * x.dim(axis + 2);
  const std::size_t count = batch * plane;
  const auto xs = x.data();
  const auto gs = gamma.data();
  const auto bs = beta.data();

  auto index = [&](std::size_t b, std::size_t c) {
    return (b * channels + c) * plane;
  };

  std::vector<Real> out(xs.size());
  std::vector<Real> inv_std(channels);
  std::vector<Real> mu(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    Real m, var;
    if (mode == Mode::train) {
      double acc = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const Real* p = xs.data() + index(b, c);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      m = static_cast<Real>(acc / static_cast<double>(count));
      double sq = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const Real* p = xs.data() + index(b, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          sq += d * d;
        }
      }
      var = static_cast<Real>(sq / static_cast<double>(count));
      const Real unbiased =
          count > 1 ? static_cast<Real>(sq / static_cast<double>(count - 1))
                    : var;
      state.running_mean[c] =
          (1 - momentum) * state.running_mean[c] + momentum * m;
      state.running_var[c] =
          (1 - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      m = state.running_mean[c];
      var = state.running_var[c];
    }
    mu[c] = m;
    inv_std[c] = Real{1} / std::sqrt(var + eps);
    for (std::size_t b = 0; b < batch; ++b) {
      const Real* p = xs.data() + index(b, c);
      Real* y = out.data() + index(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        y[i] = gs[c] * (p[i] - m) * inv_std[c] + bs[c];
      }
    }
  }

  return make_op_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, mode, mu, inv_std, channels, batch, plane,
       count](std::span<const Real> g) {
        const auto xs = x.data();
        const auto gs = gamma.data();
        auto index = [&](std::size_t b, std::size_t c) {
          return (b * channels + c) * plane;
        };
        std::span<Real> gx = x.requires_grad() ? grad_buffer(x)
                                               : std::span<Real>();
        std::span<Real> gg = gamma.requires_grad() ? grad_buffer(gamma)
                                                   : std::span<Real>();
        std::span<Real> gb = beta.requires_grad() ? grad_buffer(beta)
                                                  : std::span<Real>();
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0, sum_g_xhat = 0;
          for (std::size_t b = 0; b < batch; ++b) {
            const Real* p = xs.data() + index(b, c);
            const Real* gy = g.data() + index(b, c);
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += gy[i];
              sum_g_xhat += gy[i] * (p[i] - mu[c]) * inv_std[c];
            }
          }
          if (!gg.empty()) gg[c] += static_cast<Real>(sum_g_xhat);
          if (!gb.empty()) gb[c] += static_cast<Real>(sum_g);
          if (gx.empty()) continue;
          const Real scale_c = gs[c] * inv_std[c];
          if (mode == Mode::eval) {
            for (std::size_t b = 0; b < batch; ++b) {
              const Real* gy = g.data() + index(b, c);
              Real* d = gx.data() + index(b, c);
              for (std::size_t i = 0; i < plane; ++i) d[i] += scale_c * gy[i];
            }
            continue;
          }
          // Batch statistics depend on x: project out mean and xhat components.
          const Real n = static_cast<Real>(count);
          const Real mean_g = static_cast<Real>(sum_g) / n;
          const Real mean_gx = static_cast<Real>(sum_g_xhat) / n;
          for (std::size_t b = 0; b < batch; ++b) {
            const Real* p = xs.data() + index(b, c);
            const Real* gy = g.data() + index(b, c);
            Real* d = gx.data() + index(b, c);
            for (std::size_t i = 0; i < plane; ++i) {
              const Real xhat = (p[i] - mu[c]) * inv_std[c];
              d[i] += scale_c * (gy[i] - mean_g - xhat * mean_gx);
            }
          }
        }
      });
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
