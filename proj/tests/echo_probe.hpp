#pragma once

// Synthetic linear-echo scene for measuring how much echo a dual mask with
// A = 1 removes: loopback q is a tone mixture plus noise, the echo a scaled
// and integer-delayed copy of q, and the near-end signal an unrelated chirp.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cd3net/enhance.hpp"

namespace testutil {

struct EchoScene {
  std::vector<cd3net::Real> near, loopback, echo, mic;
};

inline EchoScene make_echo_scene(int delay, std::uint64_t seed,
                                 std::size_t n = 16000) {
  using cd3net::Real;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  EchoScene s;
  s.near.resize(n);
  s.loopback.resize(n);
  s.echo.assign(n, 0);
  s.mic.resize(n);
  const double fs = cd3net::kSampleRate;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = double(t) / fs;
    s.loopback[t] = Real(0.3 * std::sin(2 * std::numbers::pi * 220 * x) +
                         0.2 * std::sin(2 * std::numbers::pi * 1375 * x + 0.3) +
                         0.1 * std::sin(2 * std::numbers::pi * 3010 * x + 1.1) +
                         noise(rng));
    s.near[t] = Real(0.2 * std::sin(2 * std::numbers::pi * (300 + 900 * x) * x));
  }
  for (std::size_t t = 0; t < n; ++t) {
    const long long src = (long long)t - delay;
    if (src >= 0 && src < (long long)n) s.echo[t] = Real(0.6) * s.loopback[src];
    s.mic[t] = s.near[t] + s.echo[t];
  }
  return s;
}

/// 10 log10(echo energy in P - S / residual echo energy in S_hat - S), time
/// domain, with Ŝ = P - B Q for the given mask B.
inline double suppression_db(const EchoScene& s, const cd3net::ComplexTensor& b,
                             std::size_t padded) {
  using namespace cd3net;
  const ComplexSpectrogram p = analysis_stft(s.mic, padded);
  const ComplexSpectrogram q = analysis_stft(s.loopback, padded);
  MaskPair masks;
  masks.a = {Tensor::full(p.re.shape(), 1), Tensor::zeros(p.re.shape())};
  masks.b = b;
  const TimeSignal out = istft(apply_dual_mask(p, q, masks));
  double echo = 0, residual = 0;
  for (std::size_t t = 0; t < s.mic.size(); ++t) {
    const double r = double(out.samples[t + kHop]) - double(s.near[t]);
    residual += r * r;
    echo += double(s.echo[t]) * double(s.echo[t]);
  }
  return 10 * std::log10(echo / std::max(residual, 1e-300));
}

inline double oracle_suppression_db(int delay, std::uint64_t seed) {
  using namespace cd3net;
  const EchoScene s = make_echo_scene(delay, seed);
  const std::size_t padded = analysis_length(s.mic.size());
  const ComplexSpectrogram e = analysis_stft(s.echo, padded);
  const ComplexSpectrogram q = analysis_stft(s.loopback, padded);
  return suppression_db(s, oracle_echo_mask(e, q, default_oracle_floor(q)), padded);
}

/// Same measurement with a time-invariant per-bin mask fitted by least
/// squares, B(f) = sum_k E Q* / sum_k |Q|^2, which must absorb the delay as a
/// phase ramp.
inline double stationary_suppression_db(int delay, std::uint64_t seed) {
  using namespace cd3net;
  const EchoScene s = make_echo_scene(delay, seed);
  const std::size_t padded = analysis_length(s.mic.size());
  const ComplexSpectrogram e = analysis_stft(s.echo, padded);
  const ComplexSpectrogram q = analysis_stft(s.loopback, padded);
  const std::size_t bins = q.bins(), frames = q.frames();
  std::vector<Real> br(bins * frames), bi(bins * frames);
  for (std::size_t f = 0; f < bins; ++f) {
    std::complex<double> num = 0;
    double den = 0;
    for (std::size_t k = 0; k < frames; ++k) {
      const std::size_t i = f * frames + k;
      const std::complex<double> qq(q.re.data()[i], q.im.data()[i]);
      const std::complex<double> ee(e.re.data()[i], e.im.data()[i]);
      num += ee * std::conj(qq);
      den += std::norm(qq);
    }
    const std::complex<double> b = den > 0 ? num / den : 0.0;
    for (std::size_t k = 0; k < frames; ++k) {
      br[f * frames + k] = Real(b.real());
      bi[f * frames + k] = Real(b.imag());
    }
  }
  return suppression_db(s,
                        {Tensor::from(q.re.shape(), std::move(br)),
                         Tensor::from(q.re.shape(), std::move(bi))},
                        padded);
}

}  // namespace testutil
