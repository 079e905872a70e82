#include "cd3net/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cd3net/errors.hpp"
#include "cd3net/ops.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

void require_pair(const Tensor& est, const Tensor& ref, const char* what) {
  if (est.rank() != 1 || est.shape() != ref.shape()) {
    throw InvalidArgument(std::string(what) + ": expected equal-length [N] signals, got " +
                          shape_str(est.shape()) + " and " + shape_str(ref.shape()));
  }
}

Tensor zero_mean(const Tensor& x) { return sub(x, expand(mean(x), x.shape())); }

std::vector<double> zero_mean(std::span<const Real> x) {
  double m = 0;
  for (Real v : x) m += v;
  m /= double(std::max<std::size_t>(x.size(), 1));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = double(x[i]) - m;
  return out;
}

struct Centered {
  std::vector<double> est, ref;
  double ref_energy = 0;
  double gamma = 0;
};

Centered center(std::span<const Real> est, std::span<const Real> ref, const char* what) {
  if (est.size() != ref.size() || est.empty()) {
    throw InvalidArgument(std::string(what) + ": signals must have equal, non-zero length");
  }
  Centered c{zero_mean(est), zero_mean(ref)};
  double dot = 0;
  for (std::size_t i = 0; i < c.ref.size(); ++i) {
    c.ref_energy += c.ref[i] * c.ref[i];
    dot += c.est[i] * c.ref[i];
  }
  if (!(c.ref_energy > 0)) throw InvalidArgument(std::string(what) + ": reference is zero");
  c.gamma = dot / c.ref_energy;
  return c;
}

double ratio_db(double num, double den) {
  if (!(den > 0)) return kMetricClampDb;
  if (!(num > 0)) return -kMetricClampDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricClampDb, kMetricClampDb);
}

std::vector<Real> symmetric_hamming(std::size_t n) {
  std::vector<Real> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = Real(0.54 - 0.46 * std::cos(2 * std::numbers::pi * double(i) / double(n - 1)));
  }
  return w;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0 && alpha <= 1 && beta >= 0 && beta <= 1) ||
      std::abs(double(alpha) + double(beta) - 1.0) > 1e-6) {
    throw InvalidArgument("loss weights must lie in [0,1] and sum to one");
  }
}

Tensor neg_sd_sdr(const Tensor& est, const Tensor& ref, Real eps) {
  require_pair(est, ref, "neg_sd_sdr");
  if (!(eps > 0)) throw InvalidArgument("neg_sd_sdr: eps must be positive");
  const Tensor e = zero_mean(est);
  const Tensor r = zero_mean(ref);
  const Tensor ref_energy = sum(square(r));
  if (!(ref_energy.item() > 0)) throw InvalidArgument("neg_sd_sdr: reference is zero");
  const Tensor gamma = div(sum(mul(e, r)), ref_energy);
  const Tensor target = mul(square(gamma), ref_energy);
  const Tensor error = add_constant(sum(square(sub(e, r))), eps);
  const Tensor ratio = add_constant(div(target, error), eps);
  return scale(log(ratio), Real(-10.0 / std::numbers::ln10));
}

double si_sdr(std::span<const Real> est, std::span<const Real> ref) {
  const Centered c = center(est, ref, "si_sdr");
  double err = 0;
  for (std::size_t i = 0; i < c.ref.size(); ++i) {
    const double d = c.est[i] - c.gamma * c.ref[i];
    err += d * d;
  }
  return ratio_db(c.gamma * c.gamma * c.ref_energy, err);
}

double sdr(std::span<const Real> est, std::span<const Real> ref) {
  const Centered c = center(est, ref, "sdr");
  double err = 0;
  for (std::size_t i = 0; i < c.ref.size(); ++i) {
    const double d = c.est[i] - c.ref[i];
    err += d * d;
  }
  return ratio_db(c.ref_energy, err);
}

double sd_sdr(std::span<const Real> est, std::span<const Real> ref) {
  const Centered c = center(est, ref, "sd_sdr");
  double err = 0;
  for (std::size_t i = 0; i < c.ref.size(); ++i) {
    const double d = c.est[i] - c.ref[i];
    err += d * d;
  }
  return ratio_db(c.gamma * c.gamma * c.ref_energy, err);
}

double hz_to_bark(double hz) {
  return 13.0 * std::atan(0.00076 * hz) + 3.5 * std::atan((hz / 7500.0) * (hz / 7500.0));
}

const std::vector<Real>& bark_filterbank() {
  static const std::vector<Real> bank = [] {
    const double top = hz_to_bark(kSampleRate / 2.0);
    std::vector<double> edges(kBarkBands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = top * double(i) / double(kBarkBands + 1);
    }
    std::vector<Real> w(kBarkBands * kBins, 0);
    for (std::size_t b = 0; b < kBarkBands; ++b) {
      const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
      for (std::size_t k = 0; k < kBins; ++k) {
        const double z = hz_to_bark(double(k) * kSampleRate / double(kFftSize));
        double v = 0;
        if (z > lo && z <= mid) v = (z - lo) / (mid - lo);
        else if (z > mid && z < hi) v = (hi - z) / (hi - mid);
        w[b * kBins + k] = Real(v);
      }
    }
    return w;
  }();
  return bank;
}

Tensor bark_log_spectrum(const Tensor& x) {
  if (x.rank() != 1 || x.size() < kFftSize) {
    throw InvalidArgument("perceptual loss needs signals of at least " +
                          std::to_string(kFftSize) + " samples");
  }
  static const std::vector<Real> window = symmetric_hamming(kFftSize);
  static const Tensor bank = Tensor::from({kBarkBands, kBins}, bark_filterbank());
  const Tensor spec = stft_tensor(x, window, kHop);  // [2, F, K]
  const std::size_t frames = spec.dim(2);
  const Tensor re = reshape(slice(spec, 0, 0, 1), {kBins, frames});
  const Tensor im = reshape(slice(spec, 0, 1, 1), {kBins, frames});
  const Tensor power = add(square(re), square(im));
  return log(add_constant(matmul(bank, power), kBandFloor));
}

PerceptualTerms perceptual_terms(const Tensor& est, const Tensor& ref) {
  require_pair(est, ref, "perceptual_loss");
  const Tensor d = sub(bark_log_spectrum(est), bark_log_spectrum(ref));
  PerceptualTerms t;
  t.symmetric = mean(square(d));
  t.asymmetric = mean(square(relu(d)));
  t.total = add(t.symmetric, scale(t.asymmetric, kPerceptualAsymmetry));
  return t;
}

Tensor perceptual_loss(const Tensor& est, const Tensor& ref) {
  return perceptual_terms(est, ref).total;
}

Tensor composite_loss(const Tensor& est, const Tensor& ref, const LossWeights& w) {
  w.validate();
  if (w.beta == 0) return scale(neg_sd_sdr(est, ref), w.alpha);
  if (w.alpha == 0) return scale(perceptual_loss(est, ref), w.beta);
  return add(scale(neg_sd_sdr(est, ref), w.alpha), scale(perceptual_loss(est, ref), w.beta));
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
