#pragma once

// Network input stacking, complex mask application and the time-domain
// enhancement pipeline.
//
// Signals are analysed with kHop zeros in front and enough zeros behind that
// every original sample lies where two frames overlap; the synthesized output
// is trimmed back to the input length.

#include <vector>

#include "cd3net/blocks.hpp"
#include "cd3net/dsp.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

ComplexTensor to_complex(const ComplexSpectrogram& spec);
ComplexSpectrogram to_spectrogram(const ComplexTensor& z);

/// [F,K] parts -> [4,F,K]; [B,F,K] parts -> [B,4,F,K]. Channel order is
/// P, Q, P+Q, P-Q.
ComplexTensor stack_inputs(const ComplexTensor& p, const ComplexTensor& q);
ComplexTensor stack_inputs(const ComplexSpectrogram& p, const ComplexSpectrogram& q);

/// S = A * P, elementwise complex product over identically shaped tensors.
ComplexTensor apply_single_mask(const ComplexTensor& p, const ComplexTensor& a);
/// S = A * (P - B * Q). Throws InvalidArgument when B is missing.
ComplexTensor apply_dual_mask(const ComplexTensor& p, const ComplexTensor& q,
                              const MaskPair& masks);
/// Dual masking when B is present, single masking otherwise.
ComplexTensor apply_masks(const ComplexTensor& p, const ComplexTensor& q,
                          const MaskPair& masks);

ComplexSpectrogram apply_single_mask(const ComplexSpectrogram& p,
                                     const ComplexTensor& a);
ComplexSpectrogram apply_dual_mask(const ComplexSpectrogram& p,
                                   const ComplexSpectrogram& q,
                                   const MaskPair& masks);

/// B = E / Q where |Q| >= floor, else 0.
ComplexTensor oracle_echo_mask(const ComplexSpectrogram& echo,
                               const ComplexSpectrogram& q, Real floor);
/// 1e-3 of the largest |Q| bin magnitude.
Real default_oracle_floor(const ComplexSpectrogram& q);

/// Padded analysis length for an n-sample signal.
std::size_t analysis_length(std::size_t n);
/// kHop leading zeros, x, then trailing zeros up to `padded` samples.
std::vector<Real> pad_for_analysis(const std::vector<Real>& x, std::size_t padded);
/// Analysis spectrogram of a padded signal.
ComplexSpectrogram analysis_stft(const std::vector<Real>& x, std::size_t padded);

/// Differentiable forward of the whole pipeline over a batch. Items are
/// zero-padded to the longest; output i has the length of mics[i]. A loopback
/// shorter or longer than its mic is padded or cut to the mic length.
std::vector<Tensor> enhance_batch(Cd3Net& net,
                                  const std::vector<const TimeSignal*>& mics,
                                  const std::vector<const TimeSignal*>& loopbacks,
                                  Mode mode);

/// Inference on one utterance in eval mode. The shorter of p and q is
/// zero-padded to match; the output has the padded length.
TimeSignal enhance(const TimeSignal& p, const TimeSignal& q, Cd3Net& net);

}  // namespace CD3NET_ABI
}  // namespace cd3net
