#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cd3net/errors.hpp"
#include "cd3net/objectives.hpp"
#include "cd3net/ops.hpp"
#include "test_util.hpp"

using namespace cd3net;

namespace {

std::vector<Real> noise(std::size_t n, std::uint64_t seed, double amp = 0.5) {
  std::mt19937_64 rng(seed);
  return testutil::random_values(n, rng, -amp, amp);
}

Tensor as_tensor(const std::vector<Real>& v, bool grad = false) {
  return Tensor::from({v.size()}, v, grad);
}

std::vector<Real> scaled(const std::vector<Real>& v, double c) {
  std::vector<Real> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = Real(c * v[i]);
  return out;
}

// Direct evaluation of the negative SD-SDR expression on zero-mean copies.
double direct_neg_sd_sdr(const std::vector<Real>& est, const std::vector<Real>& ref,
                         double eps = 1e-8) {
  const std::size_t n = est.size();
  double me = 0, mr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    me += est[i];
    mr += ref[i];
  }
  me /= double(n);
  mr /= double(n);
  double dot = 0, rr = 0, err = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = est[i] - me, r = ref[i] - mr;
    dot += e * r;
    rr += r * r;
    err += (e - r) * (e - r);
  }
  const double g = dot / rr;
  return -10 * std::log10(g * g * rr / (err + eps) + eps);
}

std::vector<Real> reversed(std::vector<Real> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("neg SD-SDR closed forms") {
  const std::vector<Real> ref = noise(4000, 1);
  const double half = neg_sd_sdr(as_tensor(scaled(ref, 0.5)), as_tensor(ref)).item();
  CHECK(std::abs(half) < 1e-3);
  CHECK(std::abs(half - direct_neg_sd_sdr(scaled(ref, 0.5), ref)) < 1e-3);
  const double flipped = neg_sd_sdr(as_tensor(scaled(ref, -1)), as_tensor(ref)).item();
  CHECK(std::abs(flipped - 10 * std::log10(4.0)) < 1e-3);
  CHECK(std::abs(flipped - direct_neg_sd_sdr(scaled(ref, -1), ref)) < 1e-3);

  // Zero error: the loss saturates at the eps floor.
  const double exact = neg_sd_sdr(as_tensor(ref), as_tensor(ref)).item();
  CHECK(std::isfinite(exact));
  double rr = 0, m = 0;
  for (Real v : ref) m += v;
  m /= double(ref.size());
  for (Real v : ref) rr += (v - m) * (v - m);
  CHECK(exact == doctest::Approx(-10 * std::log10(rr / 1e-8)).epsilon(1e-6));

  CHECK_THROWS_AS(neg_sd_sdr(as_tensor(ref), as_tensor(std::vector<Real>(4000, 0))),
                  InvalidArgument);
  CHECK_THROWS_AS(neg_sd_sdr(as_tensor(ref), as_tensor(std::vector<Real>(4000, 0.3))),
                  InvalidArgument);
  CHECK_THROWS_AS(neg_sd_sdr(as_tensor(ref), as_tensor(noise(3999, 2))), InvalidArgument);
}

TEST_CASE("neg SD-SDR matches direct evaluation and the metric") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::vector<Real> ref = noise(1000, 100 + seed);
    std::vector<Real> est = noise(1000, 200 + seed, 0.3);
    for (std::size_t i = 0; i < est.size(); ++i) est[i] += Real(0.8) * ref[i] + Real(0.1);
    const double loss = neg_sd_sdr(as_tensor(est), as_tensor(ref)).item();
    CHECK(loss == doctest::Approx(direct_neg_sd_sdr(est, ref)).epsilon(1e-10));
    CHECK(-loss == doctest::Approx(sd_sdr(est, ref)).epsilon(1e-6));
  }
}

TEST_CASE("SI-SDR and SDR closed forms") {
  const std::vector<Real> ref = noise(8000, 3);
  CHECK(si_sdr(scaled(ref, 2), ref) == 60);
  CHECK(std::abs(sdr(scaled(ref, 2), ref)) < 1e-9);
  CHECK(si_sdr(ref, ref) == 60);
  CHECK(sdr(ref, ref) == 60);

  // n orthogonal to ref (and zero mean) with energy 0.1 * |ref|^2.
  std::vector<double> r(ref.begin(), ref.end()), n(8000);
  const std::vector<Real> raw = noise(8000, 4);
  double mr = 0, mn = 0;
  for (std::size_t i = 0; i < 8000; ++i) {
    mr += r[i];
    mn += raw[i];
  }
  double rr = 0, dot = 0, nn = 0;
  for (std::size_t i = 0; i < 8000; ++i) {
    r[i] -= mr / 8000;
    n[i] = raw[i] - mn / 8000;
    rr += r[i] * r[i];
  }
  for (std::size_t i = 0; i < 8000; ++i) dot += n[i] * r[i];
  for (std::size_t i = 0; i < 8000; ++i) {
    n[i] -= dot / rr * r[i];
    nn += n[i] * n[i];
  }
  const double k = std::sqrt(0.1 * rr / nn);
  std::vector<Real> ref0(8000), est(8000);
  for (std::size_t i = 0; i < 8000; ++i) {
    ref0[i] = Real(r[i]);
    est[i] = Real(r[i] + k * n[i]);
  }
  CHECK(sdr(est, ref0) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(si_sdr(est, ref0) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK_THROWS_AS(si_sdr(ref, std::vector<Real>(8000, 0)), InvalidArgument);
  CHECK_THROWS_AS(sdr(ref, std::vector<Real>(10, 1)), InvalidArgument);
}

TEST_CASE("SI-SDR scale invariance and SD-SDR bound") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mix(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<Real> ref = noise(600, 1000 + trial);
    std::vector<Real> est = noise(600, 2000 + trial);
    const double a = mix(rng);
    for (std::size_t i = 0; i < est.size(); ++i) est[i] = Real(a * ref[i] + 0.4 * est[i]);
    const double base = si_sdr(est, ref);
    for (double c : {0.01, 0.5, 3.0, 250.0}) {
      CHECK(std::abs(si_sdr(scaled(est, c), ref) - base) < 1e-9);
    }
    CHECK(sd_sdr(est, ref) <= base + 1e-12);
  }
}

TEST_CASE("loss gradients") {
  for (std::size_t n : {600, 1024, 1537}) {
    CAPTURE(n);
    const std::vector<Real> ref = noise(n, n);
    std::vector<Real> est = noise(n, n + 1, 0.2);
    for (std::size_t i = 0; i < n; ++i) est[i] += Real(0.7) * ref[i];
    const Tensor r = as_tensor(ref);
    // A few entries sit near 1e-6 of the largest gradient, so plain central
    // differences drown in roundoff; the five-point stencil tolerates a wider step.
    CHECK(grad_check([&](const Tensor& e) { return neg_sd_sdr(e, r); }, as_tensor(est), 2e-3,
                     Stencil::central4) < 1e-6);
    CHECK(grad_check([&](const Tensor& e) { return perceptual_loss(e, r); }, as_tensor(est), 2e-3,
                     Stencil::central4) < 1e-6);
  }
}

TEST_CASE("Bark filterbank") {
  CHECK(hz_to_bark(0) == 0);
  CHECK(hz_to_bark(1000) == doctest::Approx(8.51).epsilon(0.01));
  const std::vector<Real>& bank = bark_filterbank();
  REQUIRE(bank.size() == kBarkBands * kBins);
  for (std::size_t b = 0; b < kBarkBands; ++b) {
    double total = 0;
    for (std::size_t k = 0; k < kBins; ++k) {
      const Real w = bank[b * kBins + k];
      CHECK(w >= 0);
      CHECK(w <= 1);
      total += w;
    }
    CHECK(total > 0);
  }
}

TEST_CASE("perceptual surrogate") {
  const std::vector<Real> ref = noise(4096, 6);
  const Tensor r = as_tensor(ref);
  CHECK(perceptual_loss(r, r).item() == 0);

  // Scaling by c shifts every band log-energy by log(c^2), up to the floor.
  const double up = std::log(4.0);
  CHECK(perceptual_loss(as_tensor(scaled(ref, 2)), r).item() ==
        doctest::Approx(1.5 * up * up).epsilon(1e-6));
  const double down = std::log(0.25);
  CHECK(perceptual_loss(as_tensor(scaled(ref, 0.5)), r).item() ==
        doctest::Approx(down * down).epsilon(1e-6));

  // A loud high-frequency tone on a low-pass reference is an additive artifact.
  std::vector<Real> low(4096), with_tone(4096), half_tone(4096);
  for (std::size_t t = 0; t < 4096; ++t) {
    const double x = double(t) / kSampleRate;
    low[t] = Real(0.3 * std::sin(2 * M_PI * 200 * x) + 0.2 * std::sin(2 * M_PI * 450 * x) +
                  1e-3 * ref[t]);
    const double tone = 0.5 * std::sin(2 * M_PI * 6000 * x);
    with_tone[t] = Real(low[t] + tone);
    half_tone[t] = Real(low[t] + 0.1 * tone);
  }
  const PerceptualTerms loud = perceptual_terms(as_tensor(with_tone), as_tensor(low));
  const PerceptualTerms soft = perceptual_terms(as_tensor(half_tone), as_tensor(low));
  CHECK(loud.asymmetric.item() > 0);
  CHECK(loud.symmetric.item() > 0);
  CHECK(soft.total.item() < loud.total.item());
  CHECK(perceptual_loss(as_tensor(low), as_tensor(low)).item() < soft.total.item());

  CHECK_THROWS_AS(perceptual_loss(as_tensor(noise(500, 1)), as_tensor(noise(500, 2))),
                  InvalidArgument);
}

TEST_CASE("composite loss weighting") {
  const std::vector<Real> ref = noise(2048, 7);
  std::vector<Real> est = noise(2048, 8, 0.2);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += ref[i];
  const Tensor e = as_tensor(est), r = as_tensor(ref);
  const double sd = neg_sd_sdr(e, r).item();
  const double pl = perceptual_loss(e, r).item();
  CHECK(composite_loss(e, r, {1, 0}).item() == sd);
  CHECK(composite_loss(e, r, {0, 1}).item() == pl);
  CHECK(composite_loss(e, r, {Real(0.25), Real(0.75)}).item() ==
        doctest::Approx(0.25 * sd + 0.75 * pl).epsilon(1e-12));
  CHECK_THROWS_AS(composite_loss(e, r, {Real(0.5), Real(0.6)}), InvalidArgument);
  CHECK_THROWS_AS(composite_loss(e, r, {Real(-0.5), Real(1.5)}), InvalidArgument);
}

TEST_CASE("losses are invariant to time reversal") {
  // Frame-aligned length so that reversed frames coincide with frames.
  const std::size_t n = kFftSize + 20 * kHop;
  const std::vector<Real> ref = noise(n, 9);
  std::vector<Real> est = noise(n, 10, 0.3);
  for (std::size_t i = 0; i < n; ++i) est[i] += Real(0.6) * ref[i];
  const Tensor e = as_tensor(est), r = as_tensor(ref);
  const Tensor er = as_tensor(reversed(est)), rr = as_tensor(reversed(ref));
  CHECK(neg_sd_sdr(er, rr).item() == doctest::Approx(neg_sd_sdr(e, r).item()).epsilon(1e-12));
  CHECK(perceptual_loss(er, rr).item() ==
        doctest::Approx(perceptual_loss(e, r).item()).epsilon(1e-10));
  CHECK(si_sdr(reversed(est), reversed(ref)) == doctest::Approx(si_sdr(est, ref)).epsilon(1e-12));
  CHECK(sdr(reversed(est), reversed(ref)) == doctest::Approx(sdr(est, ref)).epsilon(1e-12));
}
