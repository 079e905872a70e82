#pragma once

// Training losses and evaluation metrics. Every SDR-family quantity removes
// the mean of both signals first.

#include <span>
#include <vector>

#include "cd3net/dsp.hpp"
#include "cd3net/tensor.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

inline constexpr Real kLossEps = Real(1e-8);
inline constexpr double kMetricClampDb = 60.0;

struct LossWeights {
  Real alpha = 1;
  Real beta = 0;
  /// Throws InvalidArgument unless both lie in [0,1] and sum to one.
  void validate() const;
};

/// Negative scale-dependent SDR of est against ref, both [N]:
///   g = <est, ref> / <ref, ref>
///   loss = -10 log10(|g ref|^2 / (|est - ref|^2 + eps) + eps)
/// Differentiable in est (and ref). Throws InvalidArgument for a zero ref.
Tensor neg_sd_sdr(const Tensor& est, const Tensor& ref, Real eps = kLossEps);

/// Metrics in dB, clamped to [-60, 60].
double si_sdr(std::span<const Real> est, std::span<const Real> ref);
double sdr(std::span<const Real> est, std::span<const Real> ref);
double sd_sdr(std::span<const Real> est, std::span<const Real> ref);

// Perceptual surrogate: power spectra (symmetric 512-point Hamming, hop 256)
// through 24 triangular Bark-spaced bands, natural-log compressed with a
// floor. With d = log(band_est + floor) - log(band_ref + floor):
//   loss = mean(d^2) + 0.5 * mean(max(d, 0)^2).
inline constexpr std::size_t kBarkBands = 24;
inline constexpr Real kPerceptualAsymmetry = Real(0.5);
inline constexpr Real kBandFloor = Real(1e-8);

/// [kBarkBands, kBins] triangular weights.
const std::vector<Real>& bark_filterbank();
/// Zwicker's critical-band rate for a frequency in Hz.
double hz_to_bark(double hz);

/// Band log-energies [kBarkBands, K] of a signal [N], N >= 512.
Tensor bark_log_spectrum(const Tensor& x);

struct PerceptualTerms {
  Tensor symmetric;
  Tensor asymmetric;
  Tensor total;
};
PerceptualTerms perceptual_terms(const Tensor& est, const Tensor& ref);
Tensor perceptual_loss(const Tensor& est, const Tensor& ref);

/// alpha * neg_sd_sdr + beta * perceptual_loss; a zero weight skips its term.
Tensor composite_loss(const Tensor& est, const Tensor& ref, const LossWeights& w);

}  // namespace CD3NET_ABI
}  // namespace cd3net
