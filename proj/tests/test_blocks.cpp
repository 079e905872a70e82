#include <doctest.h>

#include <cmath>
#include <random>

#include "cd3net/blocks.hpp"
#include "cd3net/errors.hpp"
#include "test_util.hpp"

using namespace cd3net;
using testutil::random_tensor;

namespace {

const std::string kConfigDir = CD3NET_CONFIG_DIR;

ComplexTensor random_complex(const Shape& shape, std::mt19937_64& rng,
                             bool requires_grad = false) {
  return {random_tensor(shape, rng, requires_grad),
          random_tensor(shape, rng, requires_grad)};
}

ComplexTensor zeros_complex(const Shape& shape) {
  return {Tensor::zeros(shape), Tensor::zeros(shape)};
}

NetConfig small_config(std::vector<D3Spec> blocks, MaskMode mode = MaskMode::dual,
                       std::size_t bnc_out = 4) {
  NetConfig cfg;
  cfg.mask_mode = mode;
  cfg.bnc_out = bnc_out;
  cfg.d3_blocks = std::move(blocks);
  cfg.identity_mask_init = false;
  cfg.init_seed = 3;
  return cfg;
}

// Nonzero support of f(impulse) - f(0) along each axis, the impulse placed at
// the centre of an `n` x `n` grid in channel 0.
Extent measured_support(const std::function<ComplexTensor(const ComplexTensor&)>& f,
                        std::size_t channels, std::size_t n) {
  NoGradGuard guard;
  ComplexTensor impulse = zeros_complex({channels, n, n});
  impulse.re.mutable_data()[(n / 2) * n + n / 2] = 1;
  impulse.im.mutable_data()[(n / 2) * n + n / 2] = Real(0.5);
  const ComplexTensor a = f(impulse);
  const ComplexTensor b = f(zeros_complex({channels, n, n}));
  const std::size_t c_out = a.re.dim(0);
  std::vector<double> diff(n * n, 0.0);
  double peak = 0;
  for (std::size_t c = 0; c < c_out; ++c) {
    for (std::size_t i = 0; i < n * n; ++i) {
      const std::size_t k = c * n * n + i;
      diff[i] += std::abs(double(a.re.data()[k] - b.re.data()[k])) +
                 std::abs(double(a.im.data()[k] - b.im.data()[k]));
      peak = std::max(peak, diff[i]);
    }
  }
  std::size_t f_lo = n, f_hi = 0, t_lo = n, t_hi = 0;
  for (std::size_t fi = 0; fi < n; ++fi) {
    for (std::size_t ti = 0; ti < n; ++ti) {
      if (diff[fi * n + ti] > 1e-12 * peak) {
        f_lo = std::min(f_lo, fi);
        f_hi = std::max(f_hi, fi);
        t_lo = std::min(t_lo, ti);
        t_hi = std::max(t_hi, ti);
      }
    }
  }
  return {f_hi - f_lo + 1, t_hi - t_lo + 1};
}

// Full-network output stacked as a single complex tensor for support checks.
ComplexTensor net_masks(Cd3Net& net, const ComplexTensor& x) {
  MaskPair m = net.forward(x, Mode::eval);
  if (!m.b) return m.a;
  return complex_concat_channels({m.a, *m.b});
}

}  // namespace

TEST_CASE("NetConfig parse and serialize round trip") {
  const NetConfig cfg = NetConfig::load(kConfigDir + "/default_dual.cfg");
  CHECK(cfg.mask_mode == MaskMode::dual);
  CHECK(cfg.bnc_out == 32);
  REQUIRE(cfg.d3_blocks.size() == 2);
  CHECK(cfg.d3_blocks[1].growth == 7);
  CHECK(cfg.d3_blocks[1].transition == 112);
  const NetConfig again = NetConfig::parse(cfg.serialize());
  CHECK(again.serialize() == cfg.serialize());
  CHECK(count_params(again) == count_params(cfg));
}

TEST_CASE("NetConfig rejects malformed text") {
  CHECK_THROWS_AS(NetConfig::parse("bnc_out 3\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("bnc_out = 3\nbnc_out = 4\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("colour = red\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("mask_mode = triple\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("bnc_out = -2\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("d3_blocks = 1\nd3.1.growth = 2\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("d3_blocks = 1\nd3.0.growth = 0\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("d3_blocks = 1\nd3.0.kernel = 4\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("input_channels = 3\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::parse("bn_eps = 0\n"), InvalidArgument);
  CHECK_THROWS_AS(NetConfig::load(kConfigDir + "/missing.cfg"), NotFound);
  const NetConfig cfg = NetConfig::parse("# only comments\n\nbnc_out = 5  # trailing\n");
  CHECK(cfg.bnc_out == 5);
  CHECK(cfg.d3_blocks.empty());
}

TEST_CASE("shipped configs meet the parameter budget") {
  const NetConfig dual = NetConfig::load(kConfigDir + "/default_dual.cfg");
  const NetConfig single = NetConfig::load(kConfigDir + "/default_single.cfg");
  const std::size_t nd = count_params(dual);
  const std::size_t ns = count_params(single);
  CHECK(nd == 356600);
  CHECK(ns == 354582);
  CHECK(std::abs(double(nd) - 354000.0) <= 0.15 * 354000.0);
  CHECK(nd > ns);

  Cd3Net net(dual);
  CHECK(net.param_count() == nd);
  CHECK(count_params(net.parameters()) == nd);

  for (const char* name : {"tiny_dual.cfg", "tiny_single.cfg"}) {
    const NetConfig tiny = NetConfig::load(kConfigDir + "/" + name);
    Cd3Net t(tiny);
    CHECK(count_params(t.parameters()) == count_params(tiny));
    CHECK(count_params(tiny) > 25000);
    CHECK(count_params(tiny) < 35000);
  }
}

TEST_CASE("analytic parameter count matches built networks") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> small(1, 3);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<D3Spec> blocks(std::size_t(small(rng) - 1));
    for (auto& b : blocks) {
      b = {std::size_t(small(rng)), std::size_t(small(rng)), std::size_t(small(rng)),
           trial % 2 ? std::size_t(3) : std::size_t(1), std::size_t(small(rng) + 2)};
    }
    NetConfig cfg = small_config(blocks, trial % 3 ? MaskMode::dual : MaskMode::single,
                                 std::size_t(small(rng) + 1));
    Cd3Net net(cfg);
    CHECK(count_params(net.parameters()) == count_params(cfg));
    CHECK(net.param_count() == count_params(cfg));
  }
}

TEST_CASE("bnc block") {
  std::mt19937_64 rng(2);
  BncBlock block = BncBlock::create(4, 6, Real(1e-5), Real(0.1), rng);
  ComplexTensor zero = zeros_complex({4, 5, 7});
  ComplexTensor out = bnc_forward(zero, block, Mode::train, Real(0.01));
  CHECK(out.shape() == Shape{6, 5, 7});
  for (Real v : out.re.data()) CHECK(v == 0);
  for (Real v : out.im.data()) CHECK(v == 0);
  CHECK_THROWS_AS(bnc_forward(zeros_complex({3, 5, 7}), block, Mode::train, 0.01),
                  InvalidArgument);

  block.conv.bias_r = random_tensor({6}, rng, true);
  block.conv.bias_i = random_tensor({6}, rng, true);
  ComplexTensor z = random_complex({4, 8, 8}, rng, true);
  Tensor wr = random_tensor({6, 8, 8}, rng), wi = random_tensor({6, 8, 8}, rng);
  auto loss = [&] {
    ComplexTensor h = bnc_forward(z, block, Mode::eval, Real(0.1));
    return add(sum(mul(h.re, wr)), sum(mul(h.im, wi)));
  };
  std::vector<Tensor> params{z.re, z.im};
  std::vector<NamedTensor> named;
  block.bn.collect("bn", named);
  block.conv.collect("conv", named);
  for (auto& p : named) params.push_back(p.tensor);
  CHECK(grad_check(loss, params, 1e-5) < 1e-6);

  auto train_loss = [&] {
    ComplexTensor h = bnc_forward(z, block, Mode::train, Real(0.1));
    return add(sum(mul(h.re, wr)), sum(mul(h.im, wi)));
  };
  // Batch statistics make the input gradient a projection with nearly
  // cancelling entries, so roundoff limits the attainable relative error.
  CHECK(grad_check(train_loss, std::vector<Tensor>{z.re, z.im}, 1e-5) < 1e-4);
  CHECK(grad_check(train_loss, std::vector<Tensor>{block.bn.gamma_r, block.bn.beta_i,
                                                   block.conv.weight_i},
                   1e-5) < 1e-6);
}

TEST_CASE("d2 channel bookkeeping and single-layer degeneration") {
  std::mt19937_64 rng(4);
  D2Block three = D2Block::create(5, 3, 8, 3, Real(1e-5), Real(0.1), rng);
  ComplexTensor z = random_complex({2, 5, 6, 7}, rng);
  CHECK(d2_forward(z, three, Mode::train, 0.01).shape() == Shape{2, 24, 6, 7});
  CHECK(three.out_channels() == 24);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(three.group_convs[i].spec.dilation[0] == (std::size_t(1) << i));
    CHECK(three.group_convs[i].spec.dilation[1] == (std::size_t(1) << i));
    CHECK(three.group_convs[i].spec.out_channels == (3 - i) * 8);
  }

  D2Block one = D2Block::create(5, 1, 4, 3, Real(1e-5), Real(0.1), rng);
  ComplexTensor out = d2_forward(z, one, Mode::train, Real(0.01));
  CHECK(out.shape() == Shape{2, 4, 6, 7});
  PCBatchNorm bn = PCBatchNorm::create(4, Real(1e-5), Real(0.1));
  ComplexTensor manual =
      pc_leaky_relu(pc_batch_norm(pc_apply(one.group_convs[0], z), bn, Mode::train), 0.01);
  CHECK(testutil::max_abs_diff(out.re.data(), manual.re.data()) < 1e-12);
  CHECK(testutil::max_abs_diff(out.im.data(), manual.im.data()) < 1e-12);
  CHECK_THROWS_AS(d2_forward(random_complex({2, 4, 6, 7}, rng), one, Mode::train, 0.01),
                  InvalidArgument);
}

TEST_CASE("d2 multidilation matches per-layer group convolutions") {
  // Reference evaluation: layer l convolves each input group i with its own
  // dilation-2^i weights taken from the fused group convolutions.
  std::mt19937_64 rng(6);
  const std::size_t c_in = 3, g = 2, L = 3;
  D2Block block = D2Block::create(c_in, L, g, 3, Real(1e-5), Real(0.1), rng);
  ComplexTensor z = random_complex({c_in, 9, 10}, rng);
  ComplexTensor out = d2_forward(z, block, Mode::eval, Real(0.2));

  std::vector<ComplexTensor> groups{z};
  for (std::size_t l = 1; l <= L; ++l) {
    ComplexTensor pre;
    for (std::size_t i = 0; i < l; ++i) {
      const PCLayer& fused = block.group_convs[i];
      PCLayer part;
      part.spec = fused.spec;
      part.spec.out_channels = g;
      part.weight_r = slice(fused.weight_r, 0, (l - 1 - i) * g, g);
      part.weight_i = slice(fused.weight_i, 0, (l - 1 - i) * g, g);
      ComplexTensor y = pc_apply(part, groups[i]);
      pre = i == 0 ? y : complex_add(pre, y);
    }
    PCBatchNorm bn = PCBatchNorm::create(g, Real(1e-5), Real(0.1));
    groups.push_back(pc_leaky_relu(pc_batch_norm(pre, bn, Mode::eval), Real(0.2)));
  }
  ComplexTensor expect = complex_concat_channels(
      std::vector<ComplexTensor>(groups.begin() + 1, groups.end()));
  CHECK(testutil::max_abs_diff(out.re.data(), expect.re.data()) < 1e-12);
  CHECK(testutil::max_abs_diff(out.im.data(), expect.im.data()) < 1e-12);
}

TEST_CASE("d3 block") {
  std::mt19937_64 rng(8);
  D3Spec spec{2, 3, 8, 3, 10};
  D3Block block = D3Block::create(5, spec, Real(1e-5), Real(0.1), rng);
  CHECK(block.d2[0].in_channels == 5);
  CHECK(block.d2[1].in_channels == 5 + 24);
  ComplexTensor z = random_complex({5, 6, 6}, rng);
  CHECK(d3_forward(z, block, Mode::train, 0.01).shape() == Shape{48, 6, 6});

  std::mt19937_64 a(9), b(9);
  D3Block single = D3Block::create(5, D3Spec{1, 2, 3, 3, 4}, Real(1e-5), Real(0.1), a);
  D2Block plain = D2Block::create(5, 2, 3, 3, Real(1e-5), Real(0.1), b);
  ComplexTensor x = d3_forward(z, single, Mode::train, 0.01);
  ComplexTensor y = d2_forward(z, plain, Mode::train, 0.01);
  CHECK(testutil::max_abs_diff(x.re.data(), y.re.data()) == 0);
  CHECK(testutil::max_abs_diff(x.im.data(), y.im.data()) == 0);
}

TEST_CASE("network output shape and channel bookkeeping") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> small(1, 3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<D3Spec> blocks(std::size_t(small(rng)));
    for (auto& b : blocks) {
      b = {std::size_t(small(rng)), std::size_t(small(rng)), std::size_t(small(rng)),
           3, std::size_t(small(rng) + 1)};
    }
    const MaskMode mode = trial % 2 ? MaskMode::single : MaskMode::dual;
    Cd3Net net(small_config(blocks, mode));
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const D3Spec& s = blocks[b];
      CHECK(net.d3[b].out_channels() == s.num_d2 * s.d2_layers * s.growth);
      CHECK(net.transitions[b].spec.in_channels == net.d3[b].out_channels());
    }
    for (auto [f, k] : {std::pair{1, 1}, std::pair{3, 7}, std::pair{9, 20}}) {
      const std::size_t F = std::size_t(f), K = std::size_t(k);
      MaskPair out = net.forward(random_complex({2, 4, F, K}, rng), Mode::train);
      CHECK(out.a.shape() == Shape{2, 1, F, K});
      CHECK(out.b.has_value() == (mode == MaskMode::dual));
      if (out.b) CHECK(out.b->shape() == Shape{2, 1, F, K});
      MaskPair unbatched = net.forward(random_complex({4, F, K}, rng), Mode::eval);
      CHECK(unbatched.a.shape() == Shape{1, F, K});
    }
    CHECK_THROWS_AS(net.forward(random_complex({3, 4, 4}, rng), Mode::eval),
                    InvalidArgument);
  }
}

TEST_CASE("identity mask initialization") {
  NetConfig cfg = small_config({D3Spec{1, 2, 2, 3, 3}});
  cfg.identity_mask_init = true;
  Cd3Net net(cfg);
  // With zeroed final weights the masks are exactly A = 1, B = 0.
  for (auto* w : {&net.final_conv.weight_r, &net.final_conv.weight_i}) {
    for (auto& v : w->mutable_data()) v = 0;
  }
  std::mt19937_64 rng(1);
  MaskPair out = net.forward(random_complex({4, 5, 6}, rng), Mode::eval);
  for (Real v : out.a.re.data()) CHECK(v == 1);
  for (Real v : out.a.im.data()) CHECK(v == 0);
  for (Real v : out.b->re.data()) CHECK(v == 0);
}

TEST_CASE("receptive field analytic values") {
  CHECK(receptive_field_conv(ConvSpec::same(1, 1, 3, 1, false)) == Extent{3, 3});
  CHECK(receptive_field_conv(ConvSpec::same(1, 1, 3, 4, false)) == Extent{9, 9});
  CHECK(receptive_field_d2(4, 3) == Extent{31, 31});
  CHECK(receptive_field_d2(1, 3) == Extent{3, 3});
  CHECK(compose_extent({31, 31}, {3, 3}) == Extent{33, 33});
  CHECK(receptive_field_d3(D3Spec{3, 4, 10, 3, 48}) == Extent{91, 91});
}

TEST_CASE("d2 impulse support equals 31 for L = 4") {
  std::mt19937_64 rng(12);
  D2Block block = D2Block::create(2, 4, 2, 3, Real(1e-5), Real(0.1), rng);
  const Extent support = measured_support(
      [&](const ComplexTensor& z) { return d2_forward(z, block, Mode::eval, 0.01); }, 2,
      71);
  CHECK(support == Extent{31, 31});
  CHECK(support == receptive_field_d2(4, 3));
}

TEST_CASE("network impulse support matches the analytic receptive field") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> small(1, 3);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<D3Spec> blocks(std::size_t(small(rng) % 2 + 1));
    for (auto& b : blocks) {
      b = {std::size_t(small(rng)), std::size_t(small(rng)), 2, 3, 2};
    }
    NetConfig cfg = small_config(blocks, MaskMode::dual, 2);
    Cd3Net net(cfg);
    const Extent analytic = receptive_field(cfg);
    const std::size_t n = 2 * analytic[0] + 1;
    const Extent measured = measured_support(
        [&](const ComplexTensor& z) { return net_masks(net, z); }, 4, n);
    CAPTURE(trial);
    CHECK(measured == analytic);
  }
}

TEST_CASE("forward passes are bitwise deterministic") {
  NetConfig cfg = small_config({D3Spec{2, 2, 3, 3, 4}});
  Cd3Net a(cfg), b(cfg);
  std::mt19937_64 rng(14);
  ComplexTensor x = random_complex({2, 4, 9, 11}, rng);
  MaskPair ya = a.forward(x, Mode::train);
  MaskPair yb = b.forward(x, Mode::train);
  MaskPair yc = a.forward(x, Mode::eval);
  MaskPair yd = b.forward(x, Mode::eval);
  CHECK(testutil::max_abs_diff(ya.a.re.data(), yb.a.re.data()) == 0);
  CHECK(testutil::max_abs_diff(ya.b->im.data(), yb.b->im.data()) == 0);
  CHECK(testutil::max_abs_diff(yc.a.im.data(), yd.a.im.data()) == 0);
}

TEST_CASE("tiny network gradient check") {
  NetConfig cfg = small_config({D3Spec{2, 2, 2, 3, 3}}, MaskMode::dual, 3);
  Cd3Net net(cfg);
  std::mt19937_64 rng(15);
  ComplexTensor x = random_complex({4, 8, 8}, rng, true);
  Tensor w[4];
  for (auto& t : w) t = random_tensor({1, 8, 8}, rng);
  auto loss = [&] {
    MaskPair m = net.forward(x, Mode::train);
    return add(add(sum(mul(m.a.re, w[0])), sum(mul(m.a.im, w[1]))),
               add(sum(mul(m.b->re, w[2])), sum(square(mul(m.b->im, w[3])))));
  };
  std::vector<Tensor> params{x.re, x.im};
  for (auto& p : net.parameters()) params.push_back(p.tensor);
  CHECK(grad_check(loss, params, 1e-5) < 1e-4);
}
