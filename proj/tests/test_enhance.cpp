#include <doctest.h>

#include <complex>
#include <random>

#include "cd3net/enhance.hpp"
#include "cd3net/errors.hpp"
#include "echo_probe.hpp"
#include "test_util.hpp"

using namespace cd3net;
using testutil::random_tensor;

namespace {

ComplexTensor random_complex(const Shape& shape, std::mt19937_64& rng) {
  return {random_tensor(shape, rng), random_tensor(shape, rng)};
}

ComplexTensor constant_complex(const Shape& shape, Real re, Real im) {
  return {Tensor::full(shape, re), Tensor::full(shape, im)};
}

std::complex<double> at(const ComplexTensor& z, std::size_t i) {
  return {double(z.re.data()[i]), double(z.im.data()[i])};
}

double max_complex_diff(const ComplexTensor& a, const ComplexTensor& b) {
  return std::max(testutil::max_abs_diff(a.re.data(), b.re.data()),
                  testutil::max_abs_diff(a.im.data(), b.im.data()));
}

NetConfig tiny_config() {
  NetConfig cfg;
  cfg.bnc_out = 3;
  cfg.d3_blocks = {D3Spec{1, 2, 2, 3, 3}};
  return cfg;
}

std::vector<Real> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testutil::random_values(n, rng, -0.5, 0.5);
}

}  // namespace

TEST_CASE("stack_inputs channel layout") {
  std::mt19937_64 rng(1);
  const Shape shape{5, 4};
  ComplexTensor p = random_complex(shape, rng);
  ComplexTensor q = random_complex(shape, rng);
  ComplexTensor x = stack_inputs(p, q);
  REQUIRE(x.shape() == Shape{4, 5, 4});
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(at(x, i) == at(p, i));
    CHECK(at(x, 20 + i) == at(q, i));
    CHECK(at(x, 40 + i) == at(p, i) + at(q, i));
    CHECK(at(x, 60 + i) == at(p, i) - at(q, i));
  }
  ComplexTensor zero = stack_inputs(p, constant_complex(shape, 0, 0));
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(at(zero, 20 + i) == std::complex<double>(0, 0));
    CHECK(at(zero, 40 + i) == at(p, i));
    CHECK(at(zero, 60 + i) == at(p, i));
  }
  ComplexTensor same = stack_inputs(p, p);
  for (std::size_t i = 0; i < 20; ++i) CHECK(at(same, 60 + i) == std::complex<double>(0, 0));

  ComplexTensor batched = stack_inputs(random_complex({2, 5, 4}, rng),
                                       random_complex({2, 5, 4}, rng));
  CHECK(batched.shape() == Shape{2, 4, 5, 4});
  CHECK_THROWS_AS(stack_inputs(p, random_complex({5, 3}, rng)), InvalidArgument);
}

TEST_CASE("single mask") {
  std::mt19937_64 rng(2);
  const Shape shape{6, 3};
  ComplexTensor p = random_complex(shape, rng);
  CHECK(max_complex_diff(apply_single_mask(p, constant_complex(shape, 1, 0)), p) == 0);
  ComplexTensor rot = apply_single_mask(p, constant_complex(shape, 0, 1));
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(at(rot, i) == std::complex<double>(0, 1) * at(p, i));
  }
  ComplexTensor a = random_complex(shape, rng);
  ComplexTensor s = apply_single_mask(p, a);
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(std::abs(std::abs(at(s, i)) - std::abs(at(a, i)) * std::abs(at(p, i))) < 1e-14);
  }
  ComplexTensor scaled = apply_single_mask(ComplexTensor{scale(p.re, 2.5), scale(p.im, 2.5)}, a);
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(std::abs(at(scaled, i) - 2.5 * at(s, i)) < 1e-14);
  }
  CHECK_THROWS_AS(apply_single_mask(p, random_complex({6, 4}, rng)), InvalidArgument);
}

TEST_CASE("dual mask") {
  std::mt19937_64 rng(3);
  const Shape shape{7, 5};
  ComplexTensor s_true = random_complex(shape, rng);
  ComplexTensor q = random_complex(shape, rng);
  const std::complex<double> c(0.7, -1.3);
  ComplexTensor echo = complex_mul(constant_complex(shape, Real(c.real()), Real(c.imag())), q);
  ComplexTensor p = complex_add(s_true, echo);

  MaskPair pass{constant_complex(shape, 1, 0), constant_complex(shape, 0, 0)};
  CHECK(max_complex_diff(apply_dual_mask(p, q, pass), p) == 0);

  MaskPair cancel{constant_complex(shape, 1, 0),
                  constant_complex(shape, Real(c.real()), Real(c.imag()))};
  CHECK(max_complex_diff(apply_dual_mask(p, q, cancel), s_true) < 1e-14);

  MaskPair mute{constant_complex(shape, 0, 0), random_complex(shape, rng)};
  const ComplexTensor muted = apply_dual_mask(p, q, mute);
  for (Real v : muted.re.data()) CHECK(v == 0);
  for (Real v : muted.im.data()) CHECK(v == 0);

  ComplexTensor a = random_complex(shape, rng);
  MaskPair no_b{a, constant_complex(shape, 0, 0)};
  CHECK(max_complex_diff(apply_dual_mask(p, q, no_b), apply_single_mask(p, a)) == 0);

  CHECK_THROWS_AS(apply_dual_mask(p, q, MaskPair{a, std::nullopt}), InvalidArgument);
  CHECK(max_complex_diff(apply_masks(p, q, MaskPair{a, std::nullopt}), apply_single_mask(p, a)) == 0);
}

TEST_CASE("oracle echo mask") {
  std::mt19937_64 rng(4);
  ComplexSpectrogram q = to_spectrogram(random_complex({kBins, 3}, rng));
  const Real floor = default_oracle_floor(q);
  CHECK(floor > 0);
  ComplexTensor b = oracle_echo_mask(q, q, floor);
  for (std::size_t i = 0; i < b.re.size(); ++i) {
    if (std::abs(at(to_complex(q), i)) >= floor) {
      CHECK(std::abs(at(b, i) - 1.0) < 1e-14);
    } else {
      CHECK(at(b, i) == std::complex<double>(0, 0));
    }
  }
  // Bins below the floor map to zero.
  q.re.mutable_data()[0] = 0;
  q.im.mutable_data()[0] = 0;
  CHECK(at(oracle_echo_mask(q, q, floor), 0) == std::complex<double>(0, 0));

  ComplexSpectrogram zero = to_spectrogram(constant_complex({kBins, 3}, 0, 0));
  ComplexTensor bz = oracle_echo_mask(zero, q, floor);
  for (Real v : bz.re.data()) CHECK(v == 0);
  ComplexSpectrogram p = to_spectrogram(random_complex({kBins, 3}, rng));
  MaskPair masks{constant_complex({kBins, 3}, 1, 0), bz};
  CHECK(max_complex_diff(to_complex(apply_dual_mask(p, q, masks)), to_complex(p)) == 0);

  CHECK_THROWS_AS(oracle_echo_mask(q, q, 0), InvalidArgument);
}

TEST_CASE("oracle dual mask suppression versus delay") {
  CHECK(testutil::oracle_suppression_db(0, 11) >= 60);
  for (int d : {-64, -32, -8, 8, 32, 64}) {
    CAPTURE(d);
    CHECK(testutil::oracle_suppression_db(d, 11) >= 20);
  }
}

TEST_CASE("analysis padding keeps every sample in the COLA region") {
  for (std::size_t n : {1, 255, 256, 257, 4000, 16000}) {
    const std::size_t padded = analysis_length(n);
    CHECK((padded - kFftSize) % kHop == 0);
    CHECK(padded >= n + 2 * kHop);
    const std::vector<Real> x = noise(n, n);
    const TimeSignal y = istft(analysis_stft(x, padded));
    REQUIRE(y.size() == padded);
    double worst = 0;
    for (std::size_t t = 0; t < n; ++t) {
      worst = std::max(worst, std::abs(double(y.samples[t + kHop] - x[t])));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("identity network passes the microphone signal through") {
  Cd3Net net(tiny_config());
  for (Tensor* w : {&net.final_conv.weight_r, &net.final_conv.weight_i}) {
    for (auto& v : w->mutable_data()) v = 0;
  }
  const TimeSignal p(noise(5000, 1));
  const TimeSignal q(noise(5000, 2));
  const TimeSignal y = enhance(p, q, net);
  REQUIRE(y.size() == p.size());
  CHECK(testutil::max_abs_diff(y.samples, p.samples) < 1e-12);

  // Mixed lengths: the shorter input is zero-padded.
  const TimeSignal short_q(noise(3000, 3));
  CHECK(enhance(p, short_q, net).size() == 5000);
  const TimeSignal long_q(noise(6000, 3));
  CHECK(enhance(p, long_q, net).size() == 6000);
}

TEST_CASE("silent loopback makes the output independent of B") {
  NetConfig cfg = tiny_config();
  Cd3Net net(cfg);
  const TimeSignal p(noise(3000, 4));
  const TimeSignal q(std::vector<Real>(3000, 0));
  const TimeSignal y1 = enhance(p, q, net);
  // Perturb only the B output channel of the final layer.
  for (Tensor* w : {&net.final_conv.weight_r, &net.final_conv.weight_i}) {
    auto d = w->mutable_data();
    for (std::size_t i = d.size() / 2; i < d.size(); ++i) d[i] += Real(0.3);
  }
  net.final_conv.bias_i.mutable_data()[1] += Real(2);
  const TimeSignal y2 = enhance(p, q, net);
  CHECK(testutil::max_abs_diff(y1.samples, y2.samples) == 0);
}

TEST_CASE("batched enhancement matches per-utterance inference") {
  Cd3Net net(tiny_config());
  const TimeSignal p1(noise(2000, 5)), q1(noise(2000, 6));
  const TimeSignal p2(noise(2600, 7)), q2(noise(2600, 8));
  NoGradGuard guard;
  const std::vector<Tensor> batch = enhance_batch(net, {&p1, &p2}, {&q1, &q2}, Mode::eval);
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].size() == 2000);
  CHECK(batch[1].size() == 2600);
  // Zero padding to the batch length only extends the tail; away from it
  // the results coincide.
  const TimeSignal y2 = enhance(p2, q2, net);
  CHECK(testutil::max_abs_diff(batch[1].data(), y2.samples) < 1e-12);
  CHECK_THROWS_AS(enhance_batch(net, {&p1}, {}, Mode::eval), InvalidArgument);
}

TEST_CASE("enhancement pipeline gradient") {
  NetConfig cfg = tiny_config();
  cfg.identity_mask_init = false;
  cfg.bnc_out = 2;
  cfg.d3_blocks = {D3Spec{1, 1, 1, 3, 2}};
  Cd3Net net(cfg);
  const TimeSignal p(noise(600, 9)), q(noise(600, 10));
  std::mt19937_64 rng(3);
  Tensor w = random_tensor({600}, rng);
  auto loss = [&] {
    return sum(mul(enhance_batch(net, {&p}, {&q}, Mode::eval)[0], w));
  };
  std::vector<Tensor> params{net.final_conv.weight_r, net.final_conv.bias_i,
                             net.bnc.conv.weight_i, net.transitions[0].weight_r};
  CHECK(grad_check(loss, params, 1e-5) < 1e-6);
}
