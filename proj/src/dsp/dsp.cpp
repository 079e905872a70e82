#include "cd3net/dsp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cd3net/errors.hpp"
#include "cd3net/ops.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

void TimeSignal::validate() const {
  if (sample_rate != kSampleRate) {
    throw InvalidArgument("TimeSignal: sample rate " +
                          std::to_string(sample_rate) + " Hz, expected 16000");
  }
  for (Real v : samples) {
    if (!std::isfinite(v)) throw InvalidArgument("TimeSignal: non-finite sample");
  }
}

ComplexSpectrogram ComplexSpectrogram::zeros(std::size_t frames) {
  return {Tensor::zeros({kBins, frames}), Tensor::zeros({kBins, frames})};
}

Fft::Fft(std::size_t n) : n_(n) {
  if (n < 2 || (n & (n - 1)) != 0) {
    throw InvalidArgument("Fft: size must be a power of two, got " +
                          std::to_string(n));
  }
  twiddles_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * double(k) / double(n);
    twiddles_[k] = {Real(std::cos(angle)), Real(std::sin(angle))};
  }
  bitrev_.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
    bitrev_[i] = r;
  }
}

void Fft::transform(std::vector<std::complex<Real>>& x, bool invert) const {
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        std::complex<Real> w = twiddles_[j * stride];
        if (invert) w = std::conj(w);
        const std::complex<Real> u = x[start + j];
        const std::complex<Real> v = x[start + j + half] * w;
        x[start + j] = u + v;
        x[start + j + half] = u - v;
      }
    }
  }
}

void Fft::forward(std::vector<std::complex<Real>>& x) const {
  transform(x, false);
}

void Fft::inverse(std::vector<std::complex<Real>>& x) const {
  transform(x, true);
}

void Fft::rfft(const Real* in, std::complex<Real>* out) const {
  std::vector<std::complex<Real>> buf(n_);
  for (std::size_t i = 0; i < n_; ++i) buf[i] = {in[i], Real{0}};
  transform(buf, false);
  for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = buf[k];
}

void Fft::irfft(const std::complex<Real>* in, Real* out) const {
  std::vector<std::complex<Real>> buf(n_);
  buf[0] = {in[0].real(), Real{0}};
  buf[n_ / 2] = {in[n_ / 2].real(), Real{0}};
  for (std::size_t k = 1; k < n_ / 2; ++k) {
    buf[k] = in[k];
    buf[n_ - k] = std::conj(in[k]);
  }
  transform(buf, true);
  const Real scale = Real{1} / static_cast<Real>(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = buf[i].real() * scale;
}

std::vector<Real> sqrt_hann(std::size_t n) {
  if (n == 0 || n % 2 != 0) {
    throw InvalidArgument("sqrt_hann: window length must be even and positive");
  }
  std::vector<Real> w(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(t) / double(n));
    w[t] = static_cast<Real>(std::sqrt(std::max(hann, 0.0)));
  }
  return w;
}

std::size_t frame_count(std::size_t length, std::size_t frame,
                        std::size_t hop) {
  if (length < frame) return 0;
  return (length - frame) / hop + 1;
}

namespace {

const std::vector<Real>& analysis_window() {
  static const std::vector<Real> w = sqrt_hann(kFftSize);
  return w;
}

}  // namespace

Tensor stft_tensor(const Tensor& x, const std::vector<Real>& window,
                   std::size_t hop) {
  const std::size_t n = window.size();
  if (x.rank() != 1) {
    throw InvalidArgument("stft: expected a 1-D signal, got " +
                          shape_str(x.shape()));
  }
  const std::size_t frames = frame_count(x.size(), n, hop);
  if (frames == 0) {
    throw InvalidArgument("stft: signal of " + std::to_string(x.size()) +
                          " samples is shorter than one " + std::to_string(n) +
                          "-sample frame");
  }
  const std::size_t bins = n / 2 + 1;
  const Fft fft(n);
  std::vector<Real> out(2 * bins * frames);
  std::vector<Real> frame(n);
  std::vector<std::complex<Real>> spec(bins);
  const auto xs = x.data();
  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t t = 0; t < n; ++t) frame[t] = xs[k * hop + t] * window[t];
    fft.rfft(frame.data(), spec.data());
    for (std::size_t f = 0; f < bins; ++f) {
      out[f * frames + k] = spec[f].real();
      out[(bins + f) * frames + k] = spec[f].imag();
    }
  }
  return make_op_result(
      {2, bins, frames}, std::move(out), {x},
      [x, window, hop, frames, bins, n](std::span<const Real> g) {
        // Adjoint of the framed rfft: per frame, sum_k g_re cos - g_im sin,
        // computed as n * irfft of the half-weighted gradient spectrum.
        const Fft fft(n);
        auto gx = grad_buffer(x);
        std::vector<std::complex<Real>> spec(bins);
        std::vector<Real> frame(n);
        for (std::size_t k = 0; k < frames; ++k) {
          for (std::size_t f = 0; f < bins; ++f) {
            const Real weight = (f == 0 || f == bins - 1) ? Real{1} : Real{0.5};
            spec[f] = {g[f * frames + k] * weight,
                       g[(bins + f) * frames + k] * weight};
          }
          fft.irfft(spec.data(), frame.data());
          for (std::size_t t = 0; t < n; ++t) {
            gx[k * hop + t] += frame[t] * static_cast<Real>(n) * window[t];
          }
        }
      });
}

Tensor istft_tensor(const Tensor& spec, const std::vector<Real>& window,
                    std::size_t hop) {
  const std::size_t n = window.size();
  const std::size_t bins = n / 2 + 1;
  if (spec.rank() != 3 || spec.dim(0) != 2 || spec.dim(1) != bins) {
    throw InvalidArgument("istft: expected [2," + std::to_string(bins) +
                          ",K] spectrogram, got " + shape_str(spec.shape()));
  }
  const std::size_t frames = spec.dim(2);
  const std::size_t length = frames == 0 ? 0 : (frames - 1) * hop + n;
  const Fft fft(n);
  std::vector<Real> out(length, Real{0});
  std::vector<std::complex<Real>> bins_buf(bins);
  std::vector<Real> frame(n);
  const auto s = spec.data();
  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t f = 0; f < bins; ++f) {
      bins_buf[f] = {s[f * frames + k], s[(bins + f) * frames + k]};
    }
    fft.irfft(bins_buf.data(), frame.data());
    for (std::size_t t = 0; t < n; ++t) out[k * hop + t] += frame[t] * window[t];
  }
  return make_op_result(
      {length}, std::move(out), {spec},
      [spec, window, hop, frames, bins, n](std::span<const Real> g) {
        const Fft fft(n);
        auto gs = grad_buffer(spec);
        std::vector<Real> frame(n);
        std::vector<std::complex<Real>> out(bins);
        const Real inv_n = Real{1} / static_cast<Real>(n);
        for (std::size_t k = 0; k < frames; ++k) {
          for (std::size_t t = 0; t < n; ++t) frame[t] = g[k * hop + t] * window[t];
          fft.rfft(frame.data(), out.data());
          for (std::size_t f = 0; f < bins; ++f) {
            const bool edge = f == 0 || f == bins - 1;
            const Real c = edge ? inv_n : 2 * inv_n;
            gs[f * frames + k] += c * out[f].real();
            if (!edge) gs[(bins + f) * frames + k] += c * out[f].imag();
          }
        }
      });
}

Tensor pack(const ComplexSpectrogram& spec) {
  const Shape s{1, spec.re.dim(0), spec.re.dim(1)};
  return concat({reshape(spec.re, s), reshape(spec.im, s)}, 0);
}

ComplexSpectrogram unpack(const Tensor& packed) {
  const Shape s{packed.dim(1), packed.dim(2)};
  return {reshape(slice(packed, 0, 0, 1), s), reshape(slice(packed, 0, 1, 1), s)};
}

ComplexSpectrogram stft(const TimeSignal& signal) {
  NoGradGuard no_grad;
  Tensor x = Tensor::from({signal.size()}, signal.samples);
  return unpack(stft_tensor(x, analysis_window(), kHop));
}

TimeSignal istft(const ComplexSpectrogram& spec) {
  if (spec.re.shape() != spec.im.shape() || spec.re.rank() != 2 ||
      spec.re.dim(0) != kBins) {
    throw InvalidArgument("istft: inconsistent spectrogram dimensions");
  }
  NoGradGuard no_grad;
  Tensor y = istft_tensor(pack(spec), analysis_window(), kHop);
  return TimeSignal(std::vector<Real>(y.data().begin(), y.data().end()));
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
