#pragma once

// Analysis/synthesis front end: 512-point sqrt-Hann STFT at hop 256, 16 kHz.
// Frames start at k * hop with no centre padding; a trailing partial frame is
// dropped.

#include <complex>
#include <cstddef>
#include <vector>

#include "cd3net/tensor.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kHop = 256;
inline constexpr std::size_t kBins = kFftSize / 2 + 1;

struct TimeSignal {
  std::vector<Real> samples;
  int sample_rate = kSampleRate;

  TimeSignal() = default;
  explicit TimeSignal(std::vector<Real> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  /// Throws InvalidArgument unless the rate is 16 kHz and samples finite.
  void validate() const;
};

/// Complex F x K spectrogram held as a (real, imaginary) tensor pair.
struct ComplexSpectrogram {
  Tensor re;
  Tensor im;

  std::size_t bins() const { return re.dim(0); }
  std::size_t frames() const { return re.dim(1); }
  static ComplexSpectrogram zeros(std::size_t frames);
};

/// Power-of-two complex FFT with cached twiddles.
class Fft {
 public:
  explicit Fft(std::size_t n);

  std::size_t size() const { return n_; }
  void forward(std::vector<std::complex<Real>>& x) const;
  /// Unnormalized inverse: forward with conjugated twiddles.
  void inverse(std::vector<std::complex<Real>>& x) const;

  /// n real samples -> n/2+1 bins.
  void rfft(const Real* in, std::complex<Real>* out) const;
  /// n/2+1 bins -> n real samples, scaled by 1/n. The imaginary parts of the
  /// DC and Nyquist bins are ignored.
  void irfft(const std::complex<Real>* in, Real* out) const;

 private:
  void transform(std::vector<std::complex<Real>>& x, bool invert) const;

  std::size_t n_;
  std::vector<std::complex<Real>> twiddles_;
  std::vector<std::size_t> bitrev_;
};

/// Periodic Hann window followed by a square root.
std::vector<Real> sqrt_hann(std::size_t n);

/// Number of full frames in a signal of `length` samples (0 if too short).
std::size_t frame_count(std::size_t length, std::size_t frame = kFftSize,
                        std::size_t hop = kHop);

ComplexSpectrogram stft(const TimeSignal& signal);
TimeSignal istft(const ComplexSpectrogram& spec);

/// Differentiable framed real FFT: x [N] -> [2, n/2+1, K] with the real part
/// in slot 0 and the imaginary part in slot 1.
Tensor stft_tensor(const Tensor& x, const std::vector<Real>& window,
                   std::size_t hop);

/// Differentiable inverse: spec [2, n/2+1, K] -> [(K-1)hop + n] by windowed
/// overlap-add of per-frame inverse FFTs.
Tensor istft_tensor(const Tensor& spec, const std::vector<Real>& window,
                    std::size_t hop);

/// Packs a spectrogram into the [2,F,K] layout used by the tensor routines.
Tensor pack(const ComplexSpectrogram& spec);
ComplexSpectrogram unpack(const Tensor& packed);

}  // namespace CD3NET_ABI
}  // namespace cd3net
