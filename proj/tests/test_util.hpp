#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "cd3net/tensor.hpp"

namespace testutil {

using cd3net::Real;
using cd3net::Shape;
using cd3net::Tensor;

inline std::vector<Real> random_values(std::size_t n, std::mt19937_64& rng,
                                       double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return v;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng,
                            bool requires_grad = false, double lo = -1.0,
                            double hi = 1.0) {
  return Tensor::from(shape, random_values(cd3net::shape_size(shape), rng, lo,
                                           hi),
                      requires_grad);
}

inline double max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  }
  return worst;
}

inline double max_rel_diff(std::span<const Real> a, std::span<const Real> b) {
  double worst = 0;
  double scale = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(double(b[i])));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])) / scale);
  }
  return worst;
}

}  // namespace testutil
