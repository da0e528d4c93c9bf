#include "doctest.h"
#include "support.hpp"

#include "rift/error.hpp"

using namespace rift;
using namespace rift_test;

namespace {

RegionModulation random_modulation(int N, int R, int C, std::mt19937_64& rng) {
  return {Var::parameter(random_tensor({N, R, C}, rng)), Var::parameter(random_tensor({N, R, C}, rng))};
}

void zero_map(RinBlock& b) {
  b.map().weight.mutable_value().fill(0.0);
  b.map().bias.mutable_value().fill(0.0);
}

void identity_conv(Conv2d& conv) {
  Tensor& w = conv.weight.mutable_value();
  w.fill(0.0);
  const int k = w.dim(2);
  for (int c = 0; c < std::min(w.dim(0), w.dim(1)); ++c) w.at(c, c, k / 2, k / 2) = 1.0;
  if (conv.bias.defined()) conv.bias.mutable_value().fill(0.0);
}

}  // namespace

TEST_CASE("channel statistics: closed forms and loop oracle") {
  const ChannelStats constant = channel_stats(Tensor({2, 1, 3, 3}, 3.0));
  CHECK(constant.mean[0] == doctest::Approx(3.0));
  CHECK(constant.stddev[0] == doctest::Approx(std::sqrt(kRinEpsilon)));

  const ChannelStats sym = channel_stats(Tensor({1, 1, 1, 2}, std::vector<double>{-1.0, 1.0}));
  CHECK(sym.mean[0] == doctest::Approx(0.0));
  CHECK(sym.stddev[0] == doctest::Approx(std::sqrt(1.0 + kRinEpsilon)));

  std::mt19937_64 rng(31);
  const Tensor f = random_tensor({2, 4, 8, 8}, rng, -2.0, 3.0);
  const ChannelStats s = channel_stats(f);
  for (int c = 0; c < 4; ++c) {
    double sum = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) sum += f.at(n, c, y, x);
    const double mu = sum / 128.0;
    double sq = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) sq += (f.at(n, c, y, x) - mu) * (f.at(n, c, y, x) - mu);
    CHECK(std::abs(s.mean[c] - mu) < 1e-6);
    CHECK(std::abs(s.stddev[c] - std::sqrt(sq / 128.0 + kRinEpsilon)) < 1e-6);
    CHECK(s.stddev[c] >= std::sqrt(kRinEpsilon));
  }
  CHECK_THROWS_AS(channel_stats(Tensor({1, 2, 3})), ValidationError);
}

TEST_CASE("rin_forward matches the per-pixel oracle") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor f = random_tensor({2, 4, 8, 8}, rng, -3.0, 3.0);
    const MaskBatch masks = random_masks(2, 8, 8, 3, rng);
    const RegionModulation mod = random_modulation(2, 3, 4, rng);
    const Tensor got = rin_forward(Var::constant(f), onehots(masks), mod).value();
    CHECK(max_abs_diff(got, rin_oracle(f, masks, mod.gamma.value(), mod.beta.value())) < 1e-10);
  }
}

TEST_CASE("rin_forward degenerate configurations") {
  std::mt19937_64 rng(33);
  SUBCASE("one region, zero modulation is plain channel normalization") {
    const Tensor f = random_tensor({2, 3, 4, 4}, rng);
    const MaskBatch masks(2, RegionMask::constant(4, 4, 1, 0));
    const RegionModulation zero{Var::constant(Tensor({2, 1, 3}, 0.0)), Var::constant(Tensor({2, 1, 3}, 0.0))};
    const Tensor got = rin_forward(Var::constant(f), onehots(masks), zero).value();
    const Tensor ref = channel_normalize(Var::constant(f)).value();
    CHECK(max_abs_diff(got, ref) == 0.0);
  }
  SUBCASE("constant input, beta per region") {
    const MaskBatch masks{RegionMask(2, 2, 2, {0, 1, 1, 0})};
    const RegionModulation mod{Var::constant(Tensor({1, 2, 1}, 0.0)),
                               Var::constant(Tensor({1, 2, 1}, std::vector<double>{1.0, 2.0}))};
    const Tensor got = rin_forward(Var::constant(Tensor({1, 1, 2, 2}, 5.0)), onehots(masks), mod).value();
    CHECK(got[0] == 1.0);
    CHECK(got[1] == 2.0);
    CHECK(got[2] == 2.0);
    CHECK(got[3] == 1.0);
  }
  SUBCASE("shape mismatches throw") {
    const Var f = Var::constant(random_tensor({1, 3, 4, 4}, rng));
    const RegionModulation mod = random_modulation(1, 3, 3, rng);
    CHECK_THROWS_AS(rin_forward(f, onehots({random_mask(4, 5, 3, rng)}), mod), ValidationError);
    CHECK_THROWS_AS(rin_forward(f, onehots({random_mask(4, 4, 2, rng)}), mod), ValidationError);
    CHECK_THROWS_AS(rin_forward(f, onehots({random_mask(4, 4, 3, rng)}), random_modulation(1, 3, 2, rng)),
                    ValidationError);
  }
}

TEST_CASE("locality: other regions' parameters never reach region i") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor f = random_tensor({2, 3, 6, 6}, rng);
    const MaskBatch masks = random_masks(2, 6, 6, 3, rng);
    const RegionModulation mod = random_modulation(2, 3, 3, rng);
    const int i = static_cast<int>(rng() % 3);
    Tensor g2 = mod.gamma.value(), b2 = mod.beta.value();
    for (int n = 0; n < 2; ++n)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          if (r == i) continue;
          g2[(n * 3 + r) * 3 + c] += 5.0;
          b2[(n * 3 + r) * 3 + c] -= 7.0;
        }
    const Tensor a = rin_forward(Var::constant(f), onehots(masks), mod).value();
    const Tensor b = rin_forward(Var::constant(f), onehots(masks), {Var::constant(g2), Var::constant(b2)}).value();
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
          for (int x = 0; x < 6; ++x)
            if (masks[n].label(y, x) == i) REQUIRE(a.at(n, c, y, x) == b.at(n, c, y, x));
  }
}

TEST_CASE("rin_forward gradients and empty-region zero gradient") {
  std::mt19937_64 rng(35);
  Var f = Var::parameter(random_tensor({1, 3, 4, 4}, rng));
  RegionMask m = random_mask(4, 4, 3, rng);
  std::vector<int> labels(m.labels().begin(), m.labels().end());
  for (int& l : labels) l = l == 2 ? 0 : l;  // region 2 absent
  const MaskBatch masks{RegionMask(4, 4, 3, labels)};
  RegionModulation mod = random_modulation(1, 3, 3, rng);
  const Tensor proj = random_tensor({1, 3, 4, 4}, rng);
  auto fn = [&] { return project(rin_forward(f, onehots(masks), mod), proj); };
  const GradCheck r = grad_check(fn, {f, mod.gamma, mod.beta});
  CHECK(r.max_rel < 1e-3);
  for (int c = 0; c < 3; ++c) {
    CHECK(mod.gamma.grad()[2 * 3 + c] == 0.0);
    CHECK(mod.beta.grad()[2 * 3 + c] == 0.0);
  }
}

TEST_CASE("modulation from style: shared affine map") {
  std::mt19937_64 rng(36);
  RinBlock block(3, 5, rng);
  SUBCASE("matrix-product oracle") {
    block.map().bias.mutable_value() = random_tensor({6}, rng);
    const Tensor st = random_tensor({2, 4, 5}, rng);
    const RegionModulation mod = block.modulation(Var::constant(st));
    const Tensor& w = block.map().weight.value();
    const Tensor& b = block.map().bias.value();
    for (int n = 0; n < 2; ++n)
      for (int r = 0; r < 4; ++r)
        for (int o = 0; o < 6; ++o) {
          double v = b[o];
          for (int d = 0; d < 5; ++d) v += w[o * 5 + d] * st[(n * 4 + r) * 5 + d];
          const double got = o < 3 ? mod.gamma.value()[(n * 4 + r) * 3 + o] : mod.beta.value()[(n * 4 + r) * 3 + o - 3];
          CHECK(std::abs(got - v) < 1e-12);
        }
  }
  SUBCASE("zero style with zero-initialized bias gives zero modulation") {
    const RegionModulation mod = block.modulation(Var::constant(Tensor({1, 3, 5}, 0.0)));
    for (double v : mod.gamma.value().values()) CHECK(v == 0.0);
    for (double v : mod.beta.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("identical rows give identical parameters") {
    Tensor st = random_tensor({1, 2, 5}, rng);
    for (int d = 0; d < 5; ++d) st[5 + d] = st[d];
    const RegionModulation mod = block.modulation(Var::constant(st));
    for (int c = 0; c < 3; ++c) {
      CHECK(mod.gamma.value()[c] == mod.gamma.value()[3 + c]);
      CHECK(mod.beta.value()[c] == mod.beta.value()[3 + c]);
    }
  }
  CHECK_THROWS_AS(block.modulation(Var::constant(Tensor({1, 3, 4}))), ValidationError);
}

TEST_CASE("RIN-Res block with identity convolutions matches a hand-built graph") {
  std::mt19937_64 rng(37);
  RinResBlock block(3, 3, 4, rng);
  zero_map(block.norm0());
  zero_map(block.norm1());
  identity_conv(block.conv0());
  identity_conv(block.conv1());
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const MaskBatch masks = random_masks(2, 4, 4, 2, rng);
  const Var style = Var::constant(random_tensor({2, 2, 4}, rng));
  const Tensor got = block(Var::constant(x), onehots(masks), style).value();

  const Var xv = Var::constant(x);
  const Var inner = ops::relu(channel_normalize(ops::relu(channel_normalize(xv))));
  const Tensor ref = ops::add(xv, inner).value();
  CHECK(max_abs_diff(got, ref) < 1e-12);
}

TEST_CASE("RIN-Res block: zero input with zero beta stays zero; shapes") {
  std::mt19937_64 rng(38);
  RinResBlock block(4, 2, 3, rng);
  CHECK(block.has_learned_skip());
  for (RinBlock* b : {&block.norm0(), &block.norm1(), &block.norm_skip()}) zero_map(*b);
  CHECK_FALSE(block.conv0().bias.defined());
  CHECK_FALSE(block.conv1().bias.defined());
  const MaskBatch masks = random_masks(1, 5, 5, 2, rng);
  const Var style = Var::constant(random_tensor({1, 2, 3}, rng));
  const Tensor out = block(Var::constant(Tensor({1, 4, 5, 5}, 0.0)), onehots(masks), style).value();
  CHECK(out.shape() == Shape{1, 2, 5, 5});
  for (double v : out.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(block(Var::constant(Tensor({1, 3, 5, 5})), onehots(masks), style), ValidationError);
}

TEST_CASE("RIN-Res block gradients w.r.t. input, style and every parameter") {
  std::mt19937_64 rng(39);
  for (auto [cin, cout] : {std::pair{3, 2}, std::pair{3, 3}}) {
    RinResBlock block(cin, cout, 4, rng);
    ParamSet params;
    block.register_params(params, "b");
    Var x = Var::parameter(random_tensor({1, cin, 4, 4}, rng));
    Var style = Var::parameter(random_tensor({1, 3, 4}, rng));
    const MaskBatch masks = random_masks(1, 4, 4, 3, rng);
    const Tensor proj = random_tensor({1, cout, 4, 4}, rng);
    std::vector<Var> leaves{x, style};
    for (const auto& p : params.items()) leaves.push_back(p.var);
    auto fn = [&] { return project(block(x, onehots(masks), style), proj); };
    CHECK(grad_check(fn, leaves).max_rel < 1e-3);
  }
}
