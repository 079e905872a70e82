#include "cd3net/enhance.hpp"

#include <algorithm>
#include <cmath>

#include "cd3net/errors.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

void require_same(const ComplexTensor& a, const ComplexTensor& b, const char* what) {
  a.validate();
  b.validate();
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(what) + ": shape " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
  }
}

// [.., F, K] -> [.., 1, F, K]
Tensor insert_channel_axis(const Tensor& t) {
  Shape s = t.shape();
  s.insert(s.end() - 2, 1);
  return reshape(t, s);
}

}  // namespace

ComplexTensor to_complex(const ComplexSpectrogram& spec) { return {spec.re, spec.im}; }

ComplexSpectrogram to_spectrogram(const ComplexTensor& z) {
  z.validate();
  if (z.re.rank() != 2) {
    throw InvalidArgument("to_spectrogram: expected [F,K], got " + shape_str(z.shape()));
  }
  return {z.re, z.im};
}

ComplexTensor stack_inputs(const ComplexTensor& p, const ComplexTensor& q) {
  require_same(p, q, "stack_inputs");
  if (p.re.rank() != 2 && p.re.rank() != 3) {
    throw InvalidArgument("stack_inputs: expected [F,K] or [B,F,K] parts");
  }
  const ComplexTensor sum = complex_add(p, q);
  const ComplexTensor diff = complex_sub(p, q);
  std::vector<Tensor> re, im;
  for (const ComplexTensor* z : {&p, &q, &sum, &diff}) {
    re.push_back(insert_channel_axis(z->re));
    im.push_back(insert_channel_axis(z->im));
  }
  return {concat_channels(re), concat_channels(im)};
}

ComplexTensor stack_inputs(const ComplexSpectrogram& p, const ComplexSpectrogram& q) {
  return stack_inputs(to_complex(p), to_complex(q));
}

ComplexTensor apply_single_mask(const ComplexTensor& p, const ComplexTensor& a) {
  require_same(p, a, "apply_single_mask");
  return complex_mul(a, p);
}

ComplexTensor apply_dual_mask(const ComplexTensor& p, const ComplexTensor& q,
                              const MaskPair& masks) {
  if (!masks.b) throw InvalidArgument("apply_dual_mask: mask B is missing");
  require_same(p, q, "apply_dual_mask");
  require_same(p, masks.a, "apply_dual_mask");
  require_same(p, *masks.b, "apply_dual_mask");
  return complex_mul(masks.a, complex_sub(p, complex_mul(*masks.b, q)));
}

ComplexTensor apply_masks(const ComplexTensor& p, const ComplexTensor& q,
                          const MaskPair& masks) {
  return masks.b ? apply_dual_mask(p, q, masks) : apply_single_mask(p, masks.a);
}

ComplexSpectrogram apply_single_mask(const ComplexSpectrogram& p,
                                     const ComplexTensor& a) {
  return to_spectrogram(apply_single_mask(to_complex(p), a));
}

ComplexSpectrogram apply_dual_mask(const ComplexSpectrogram& p,
                                   const ComplexSpectrogram& q,
                                   const MaskPair& masks) {
  return to_spectrogram(apply_dual_mask(to_complex(p), to_complex(q), masks));
}

ComplexTensor oracle_echo_mask(const ComplexSpectrogram& echo,
                               const ComplexSpectrogram& q, Real floor) {
  require_same(to_complex(echo), to_complex(q), "oracle_echo_mask");
  if (!(floor > 0)) throw InvalidArgument("oracle_echo_mask: floor must be positive");
  const auto er = echo.re.data(), ei = echo.im.data();
  const auto qr = q.re.data(), qi = q.im.data();
  std::vector<Real> br(er.size(), 0), bi(er.size(), 0);
  for (std::size_t i = 0; i < er.size(); ++i) {
    const std::complex<Real> qq(qr[i], qi[i]);
    if (std::abs(qq) >= floor) {
      const std::complex<Real> b = std::complex<Real>(er[i], ei[i]) / qq;
      br[i] = b.real();
      bi[i] = b.imag();
    }
  }
  return {Tensor::from(echo.re.shape(), std::move(br)),
          Tensor::from(echo.re.shape(), std::move(bi))};
}

Real default_oracle_floor(const ComplexSpectrogram& q) {
  Real peak = 0;
  const auto qr = q.re.data(), qi = q.im.data();
  for (std::size_t i = 0; i < qr.size(); ++i) {
    peak = std::max(peak, std::hypot(qr[i], qi[i]));
  }
  return Real(1e-3) * peak;
}

std::size_t analysis_length(std::size_t n) {
  return ((n + kHop - 1) / kHop + 2) * kHop;
}

std::vector<Real> pad_for_analysis(const std::vector<Real>& x, std::size_t padded) {
  if (padded < x.size() + kHop) {
    throw InvalidArgument("pad_for_analysis: padded length too short");
  }
  std::vector<Real> out(padded, 0);
  std::copy(x.begin(), x.end(), out.begin() + kHop);
  return out;
}

ComplexSpectrogram analysis_stft(const std::vector<Real>& x, std::size_t padded) {
  return stft(TimeSignal(pad_for_analysis(x, padded)));
}

std::vector<Tensor> enhance_batch(Cd3Net& net,
                                  const std::vector<const TimeSignal*>& mics,
                                  const std::vector<const TimeSignal*>& loopbacks,
                                  Mode mode) {
  if (mics.empty() || mics.size() != loopbacks.size()) {
    throw InvalidArgument("enhance_batch: need matching, non-empty mic/loopback lists");
  }
  std::size_t longest = 0;
  for (const TimeSignal* m : mics) {
    m->validate();
    if (m->size() == 0) throw InvalidArgument("enhance_batch: empty signal");
    longest = std::max(longest, m->size());
  }
  for (const TimeSignal* q : loopbacks) q->validate();
  const std::size_t padded = analysis_length(longest);
  const std::size_t frames = frame_count(padded);
  const std::size_t plane = kBins * frames;
  const std::size_t batch = mics.size();

  std::vector<Real> pr(batch * plane), pi(batch * plane), qr(batch * plane),
      qi(batch * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<Real> q = loopbacks[b]->samples;
    q.resize(mics[b]->size(), 0);
    const ComplexSpectrogram ps = analysis_stft(mics[b]->samples, padded);
    const ComplexSpectrogram qs = analysis_stft(q, padded);
    std::copy(ps.re.data().begin(), ps.re.data().end(), pr.begin() + b * plane);
    std::copy(ps.im.data().begin(), ps.im.data().end(), pi.begin() + b * plane);
    std::copy(qs.re.data().begin(), qs.re.data().end(), qr.begin() + b * plane);
    std::copy(qs.im.data().begin(), qs.im.data().end(), qi.begin() + b * plane);
  }
  const Shape shape{batch, kBins, frames};
  const ComplexTensor p{Tensor::from(shape, std::move(pr)), Tensor::from(shape, std::move(pi))};
  const ComplexTensor q{Tensor::from(shape, std::move(qr)), Tensor::from(shape, std::move(qi))};

  const MaskPair masks = net.forward(stack_inputs(p, q), mode);
  const ComplexTensor p4{insert_channel_axis(p.re), insert_channel_axis(p.im)};
  const ComplexTensor q4{insert_channel_axis(q.re), insert_channel_axis(q.im)};
  const ComplexTensor s = apply_masks(p4, q4, masks);

  static const std::vector<Real> window = sqrt_hann(kFftSize);
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor re = reshape(slice(s.re, 0, b, 1), {1, kBins, frames});
    const Tensor im = reshape(slice(s.im, 0, b, 1), {1, kBins, frames});
    const Tensor y = istft_tensor(concat({re, im}, 0), window, kHop);
    out.push_back(slice(y, 0, kHop, mics[b]->size()));
  }
  return out;
}

TimeSignal enhance(const TimeSignal& p, const TimeSignal& q, Cd3Net& net) {
  NoGradGuard guard;
  TimeSignal mic = p, loop = q;
  const std::size_t n = std::max(p.size(), q.size());
  mic.samples.resize(n, 0);
  loop.samples.resize(n, 0);
  const std::vector<Tensor> y = enhance_batch(net, {&mic}, {&loop}, Mode::eval);
  return TimeSignal(std::vector<Real>(y[0].data().begin(), y[0].data().end()));
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
