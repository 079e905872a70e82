#pragma once

// O(N^2) direct DFT, independent of the library FFT.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace testutil {

inline std::vector<std::complex<double>> direct_rdft(
    const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * std::numbers::pi * double(k * t % n) / double(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace testutil
