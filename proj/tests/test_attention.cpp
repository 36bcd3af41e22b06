#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dysk/attention.hpp"
#include "dysk/gradcheck.hpp"
#include "oracles.hpp"

#include <sstream>

using namespace dysk;

namespace {

// Identity 1x1 convolution: weight = channel identity, bias zero.
void make_identity_conv(Tensor& weight, Tensor& bias) {
  const int c = weight.shape()[0];
  weight.value_mut().setZero();
  for (int i = 0; i < c; ++i) weight.value_mut()[flat_index(weight.shape(), {i, i, 0, 0})] = 1.0;
  bias.value_mut().setZero();
}

struct BlockFixture {
  ParamStore params;
  Rng rng;
  DsbBlock block;
  int channels, heads, height, width;

  BlockFixture(int c, int h, const BaseWindow& window, std::uint64_t seed, int hh = 6,
               int ww = 6)
      : rng(seed),
        block(make_dsb_block(c, h, window, rng, params, "dsb")),
        channels(c),
        heads(h),
        height(hh),
        width(ww) {}

  // identity q/k/v/out projections, zero offsets come from the default init
  void make_identity() {
    make_identity_conv(block.proj.wq, block.proj.bq);
    make_identity_conv(block.proj.wk, block.proj.bk);
    make_identity_conv(block.proj.wv, block.proj.bv);
    make_identity_conv(block.proj.wo, block.proj.bo);
    block.channel_weights.value_mut().setOnes();
  }

  // all keys equal -> uniform attention everywhere
  void force_equal_keys(double value = 0.3) {
    block.proj.wk.value_mut().setZero();
    block.proj.bk.value_mut().setConstant(value);
  }
};

}  // namespace

TEST_CASE("projection construction rejects indivisible head counts") {
  ParamStore params;
  Rng rng(1);
  CHECK_THROWS_WITH_AS(make_qkv_projection(6, 4, rng, params, "p"),
                       doctest::Contains("not divisible"), std::invalid_argument);
}

TEST_CASE("identity projections pass features through") {
  BlockFixture fix(4, 2, BaseWindow::square(3), 3);
  fix.make_identity();
  Rng rng(5);
  Tensor fa = uniform_tensor({1, 4, 5, 5}, rng, -1, 1);
  Tensor fb = uniform_tensor({1, 4, 5, 5}, rng, -1, 1);
  auto [q, k, v] = project_qkv(fa, fb, fix.block.proj);
  for (long i = 0; i < fa.size(); ++i) {
    CHECK(q.value()[i] == fa.value()[i]);
    CHECK(k.value()[i] == fb.value()[i]);
    CHECK(v.value()[i] == fb.value()[i]);
  }
}

TEST_CASE("zero moving features give bias-only keys and values") {
  ParamStore params;
  Rng rng(7);
  QKVProjection proj = make_qkv_projection(4, 2, rng, params, "p");
  proj.bk.value_mut().setConstant(0.25);
  proj.bv.value_mut().setConstant(-0.5);
  Tensor fa = uniform_tensor({1, 4, 3, 3}, rng, -1, 1);
  Tensor fb = Tensor::zeros({1, 4, 3, 3});
  auto [q, k, v] = project_qkv(fa, fb, proj);
  (void)q;
  CHECK(k.value().minCoeff() == 0.25);
  CHECK(k.value().maxCoeff() == 0.25);
  CHECK(v.value().minCoeff() == -0.5);
}

TEST_CASE("head views round-trip losslessly") {
  Rng rng(11);
  Tensor t = uniform_tensor({2, 8, 4, 3}, rng, -1, 1);
  Tensor heads = to_heads(t, 4);
  CHECK(heads.shape() == Shape{2, 2, 4, 4, 3});
  Tensor back = from_heads(heads);
  CHECK(back.shape() == t.shape());
  for (long i = 0; i < t.size(); ++i) CHECK(back.value()[i] == t.value()[i]);

  Tensor tapped = uniform_tensor({1, 8, 5, 4, 3}, rng, -1, 1);
  CHECK(to_heads_tapped(tapped, 4).shape() == Shape{1, 2, 4, 5, 4, 3});
}

TEST_CASE("equal keys yield uniform attention") {
  Rng rng(13);
  Tensor q = uniform_tensor({1, 2, 2, 4, 4}, rng, -1, 1);
  Tensor k = Tensor::full({1, 2, 2, 9, 4, 4}, 0.37);
  AttentionWeights rho = point_attention(q, k);
  CHECK(rho.rho.shape() == Shape{1, 2, 9, 4, 4});
  for (long i = 0; i < rho.rho.size(); ++i)
    CHECK(rho.rho.value()[i] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("a single tap takes all the weight") {
  Rng rng(17);
  Tensor q = uniform_tensor({1, 2, 1, 3, 3}, rng, -1, 1);
  Tensor k = uniform_tensor({1, 2, 1, 1, 3, 3}, rng, -1, 1);
  AttentionWeights rho = point_attention(q, k);
  for (long i = 0; i < rho.rho.size(); ++i)
    CHECK(rho.rho.value()[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-tap logits match the scalar softmax oracle") {
  // d_head = 2, Q = (1, 0), keys (1, 0) and (0, 1)
  Array qdata(2);
  qdata << 1, 0;  // layout B x d x h x H x W with singleton spatial
  Tensor q = Tensor::from_array({1, 2, 1, 1, 1}, qdata);
  Array kdata(4);
  // keys axis order: B x d x h x U x H x W; k tap0 = (1, 0), tap1 = (0, 1)
  kdata << 1, 0, 0, 1;
  Tensor k = Tensor::from_array({1, 2, 1, 2, 1, 1}, kdata);
  AttentionWeights rho = point_attention(q, k);

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  auto expected = oracle::softmax({inv_sqrt2, 0.0});
  CHECK(rho.rho.value()[0] == doctest::Approx(expected[0]).epsilon(1e-12));
  CHECK(rho.rho.value()[1] == doctest::Approx(expected[1]).epsilon(1e-12));
  CHECK(rho.rho.value()[0] == doctest::Approx(0.6698).epsilon(1e-4));
  CHECK(rho.rho.value()[1] == doctest::Approx(0.3302).epsilon(1e-4));
}

TEST_CASE("attention distributions always sum to one") {
  Rng rng(19);
  for (int trial = 0; trial < 60; ++trial) {
    const int d = 1 + int(rng.uniform_int(3));
    const int h = 1 + int(rng.uniform_int(3));
    const int taps = 1 + int(rng.uniform_int(11));
    const int hh = 2 + int(rng.uniform_int(3));
    const int ww = 2 + int(rng.uniform_int(3));
    Tensor q = uniform_tensor({1, d, h, hh, ww}, rng, -8, 8);
    Tensor k = uniform_tensor({1, d, h, taps, hh, ww}, rng, -8, 8);
    AttentionWeights rho = point_attention(q, k);
    for (int head = 0; head < h; ++head)
      for (int y = 0; y < hh; ++y)
        for (int x = 0; x < ww; ++x) {
          double total = 0;
          for (int j = 0; j < taps; ++j) total += rho.rho.at({0, head, j, y, x});
          CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
        }
  }
}

TEST_CASE("softmax shift invariance and query-scale sensitivity") {
  Rng rng(23);
  Tensor logits = uniform_tensor({1, 2, 9, 3, 3}, rng, -2, 2);
  Tensor shifted = add_scalar(logits, 3.7);
  Tensor a = softmax(logits, 2);
  Tensor b = softmax(shifted, 2);
  for (long i = 0; i < a.size(); ++i)
    CHECK(a.value()[i] == doctest::Approx(b.value()[i]).epsilon(1e-10));

  Tensor q = uniform_tensor({1, 2, 2, 3, 3}, rng, -1, 1);
  Tensor k = uniform_tensor({1, 2, 2, 5, 3, 3}, rng, -1, 1);
  AttentionWeights base = point_attention(q, k);
  AttentionWeights scaled = point_attention(scale(q, 2.0), k);
  CHECK((base.rho.value() - scaled.rho.value()).abs().maxCoeff() > 1e-4);
}

TEST_CASE("fused kernel factors as the outer product") {
  Rng rng(29);
  Tensor q = uniform_tensor({1, 2, 2, 3, 3}, rng, -1, 1);
  Tensor k = uniform_tensor({1, 2, 2, 5, 3, 3}, rng, -1, 1);
  AttentionWeights rho = point_attention(q, k);
  Tensor channel = uniform_tensor({1, 4}, rng, -1, 1);
  DynamicKernel kernel = fuse_kernel(rho, channel);
  for (int j = 0; j < 5; ++j)
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
          const double expected = rho.rho.at({0, c % 2, j, y, x}) * channel.value()[c];
          CHECK(fused_kernel_weight(kernel, 0, j, c, y, x) ==
                doctest::Approx(expected).epsilon(1e-12));
        }
}

TEST_CASE("all-ones channel weights leave the spatial part intact") {
  Rng rng(31);
  Tensor q = uniform_tensor({1, 2, 1, 2, 2}, rng, -1, 1);
  Tensor k = uniform_tensor({1, 2, 1, 3, 2, 2}, rng, -1, 1);
  AttentionWeights rho = point_attention(q, k);
  DynamicKernel kernel = fuse_kernel(rho, Tensor::full({1, 2}, 1.0));
  for (int j = 0; j < 3; ++j)
    CHECK(fused_kernel_weight(kernel, 0, j, 0, 1, 1) ==
          doctest::Approx(rho.rho.at({0, 0, j, 1, 1})).epsilon(1e-15));
}

TEST_CASE("uniform attention with unit channel averages the sampled values") {
  BlockFixture fix(4, 2, BaseWindow::square(3), 37);
  fix.make_identity();
  Rng rng(41);
  Tensor vm = uniform_tensor({1, 4, 9, 5, 5}, rng, -1, 1);
  AttentionWeights rho{Tensor::full({1, 2, 9, 5, 5}, 1.0 / 9.0)};
  Tensor out = aggregate(fuse_kernel(rho, fix.block.channel_weights), vm, fix.block.proj);
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        double mean_taps = 0;
        for (int j = 0; j < 9; ++j) mean_taps += vm.at({0, c, j, y, x});
        mean_taps /= 9;
        CHECK(out.at({0, c, y, x}) == doctest::Approx(mean_taps).epsilon(1e-12));
      }
}

TEST_CASE("one-hot center attention with zero offsets is an identity pass-through") {
  BlockFixture fix(4, 2, BaseWindow::square(3), 43);
  fix.make_identity();
  Rng rng(47);
  Tensor fa = uniform_tensor({1, 4, 6, 6}, rng, -1, 1);
  Tensor fb = uniform_tensor({1, 4, 6, 6}, rng, -1, 1);
  auto [q, k, v] = project_qkv(fa, fb, fix.block.proj);
  (void)q;
  (void)k;
  OffsetField zero{Tensor::zeros({1, 9, 2, 6, 6})};
  DeformedWindow window = deform_window(fix.block.window, zero);
  auto [km, vm] = sample_deformed_kv(k, v, window);
  (void)km;

  Array onehot = Array::Zero(1 * 2 * 9 * 6 * 6);
  AttentionWeights rho{Tensor::from_array({1, 2, 9, 6, 6}, onehot)};
  for (int head = 0; head < 2; ++head)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x)
        rho.rho.value_mut()[flat_index(rho.rho.shape(), {0, head, 4, y, x})] = 1.0;

  Tensor out = aggregate(fuse_kernel(rho, fix.block.channel_weights), vm, fix.block.proj);
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x)
        CHECK(out.at({0, c, y, x}) == doctest::Approx(fb.at({0, c, y, x})).epsilon(1e-12));
}

TEST_CASE("aggregation matches the triple-loop oracle") {
  BlockFixture fix(4, 2, BaseWindow::square(3), 53, 5, 5);
  fix.make_identity();  // identity out projection isolates the weighted sum
  Rng rng(59);
  Tensor vm = uniform_tensor({1, 4, 9, 5, 5}, rng, -1, 1);
  Tensor q = uniform_tensor({1, 2, 2, 5, 5}, rng, -1, 1);
  Tensor k = uniform_tensor({1, 2, 2, 9, 5, 5}, rng, -1, 1);
  AttentionWeights rho = point_attention(q, k);
  Tensor channel = uniform_tensor({1, 4}, rng, 0.5, 1.5);
  Tensor out = aggregate(fuse_kernel(rho, channel), vm, fix.block.proj);

  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        double acc = 0;
        for (int j = 0; j < 9; ++j)
          acc += rho.rho.at({0, c % 2, j, y, x}) * channel.value()[c] * vm.at({0, c, j, y, x});
        CHECK(out.at({0, c, y, x}) == doctest::Approx(acc).epsilon(1e-10));
      }
}

TEST_CASE("aggregation rejects tap-count mismatch") {
  BlockFixture fix(4, 2, BaseWindow::square(3), 61);
  Rng rng(67);
  Tensor q = uniform_tensor({1, 2, 2, 5, 5}, rng, -1, 1);
  Tensor k = uniform_tensor({1, 2, 2, 9, 5, 5}, rng, -1, 1);
  AttentionWeights rho = point_attention(q, k);
  Tensor vm5 = uniform_tensor({1, 4, 5, 5, 5}, rng, -1, 1);
  CHECK_THROWS_WITH_AS(aggregate(fuse_kernel(rho, fix.block.channel_weights), vm5,
                                 fix.block.proj),
                       doctest::Contains("taps"), std::invalid_argument);
}

TEST_CASE("static reduction: dsb_forward equals a window mean filter") {
  BlockFixture fix(4, 2, BaseWindow::square(3), 71);
  fix.make_identity();
  fix.force_equal_keys();
  Rng rng(73);
  Tensor fa = uniform_tensor({1, 4, 8, 8}, rng, 0, 1);
  Tensor fb = uniform_tensor({1, 4, 8, 8}, rng, 0, 1);
  Tensor out = dsb_forward(fa, fb, fix.block);
  CHECK(out.shape() == fa.shape());
  for (int c = 0; c < 4; ++c)
    for (int y = 1; y < 7; ++y)
      for (int x = 1; x < 7; ++x) {
        double mean9 = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) mean9 += fb.at({0, c, y + dy, x + dx});
        mean9 /= 9;
        CHECK(out.at({0, c, y, x}) == doctest::Approx(mean9).epsilon(1e-10));
      }
}

TEST_CASE("dsb output shape always matches the input") {
  BlockFixture fix(6, 3, BaseWindow::cross(1), 79);
  Rng rng(83);
  Tensor fa = uniform_tensor({2, 6, 4, 7}, rng, -1, 1);
  Tensor fb = uniform_tensor({2, 6, 4, 7}, rng, -1, 1);
  CHECK(dsb_forward(fa, fb, fix.block).shape() == fa.shape());
}

TEST_CASE("dsb gradients match finite differences for every block parameter") {
  ParamStore params;
  Rng rng(89);
  DsbBlock block = make_dsb_block(4, 2, BaseWindow::square(3), rng, params, "dsb");
  // break the zero-initialized offset head so its gradient path is active
  for (long i = 0; i < block.offset_net.w2.size(); ++i)
    block.offset_net.w2.value_mut()[i] = 0.05 * rng.normal();

  Tensor fa = uniform_tensor({1, 4, 8, 8}, rng, 0, 1);
  Tensor fb = uniform_tensor({1, 4, 8, 8}, rng, 0, 1);
  Tensor probe = uniform_tensor({1, 4, 8, 8}, rng, -1, 1);

  auto loss = [&]() { return sum(mul(dsb_forward(fa, fb, block), probe)); };
  Tensor out = loss();
  out.backward();

  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    REQUIRE(p.has_grad());
    const Array analytic = p.grad();
    auto eval = [&](const Tensor& replacement) {
      const Array saved = p.value();
      p.value_mut() = replacement.value();
      const double v = loss().item();
      p.value_mut() = saved;
      return v;
    };
    const Array fd = finite_diff_grad(eval, p.detach(), 1e-4);
    for (long i = 0; i < analytic.size(); ++i) {
      INFO(name, "[", i, "]");
      CHECK(std::abs(analytic[i] - fd[i]) <= 1e-6 + 1e-3 * std::abs(fd[i]));
    }
  }
}

TEST_CASE("permuting window taps leaves the block output unchanged") {
  Rng rng(97);
  const std::vector<int> perm{4, 7, 0, 2, 8, 1, 5, 3, 6};

  auto build = [&](bool permuted, ParamStore& params) {
    Rng init(101);
    std::vector<WindowTap> taps = BaseWindow::square(3).taps();
    std::vector<WindowTap> used(taps.size());
    for (size_t j = 0; j < taps.size(); ++j) used[j] = permuted ? taps[perm[j]] : taps[j];
    DsbBlock block = make_dsb_block(4, 2, BaseWindow::custom(used), init, params, "dsb");
    // random nonzero offset head, rows moved with the taps
    Rng head(103);
    Array w2 = Array::Zero(block.offset_net.w2.size());
    Array b2 = Array::Zero(block.offset_net.b2.size());
    const long row = block.offset_net.w2.size() / 18;  // elements per output channel
    Array base_w(block.offset_net.w2.size());
    Array base_b(18);
    for (long i = 0; i < base_w.size(); ++i) base_w[i] = 0.1 * head.normal();
    for (long i = 0; i < 18; ++i) base_b[i] = 0.1 * head.normal();
    for (int j = 0; j < 9; ++j) {
      const int src = permuted ? perm[j] : j;
      for (int comp = 0; comp < 2; ++comp) {
        w2.segment((2L * j + comp) * row, row) = base_w.segment((2L * src + comp) * row, row);
        b2[2 * j + comp] = base_b[2 * src + comp];
      }
    }
    block.offset_net.w2.value_mut() = w2;
    block.offset_net.b2.value_mut() = b2;
    return block;
  };

  ParamStore p1, p2;
  DsbBlock straight = build(false, p1);
  DsbBlock shuffled = build(true, p2);
  Tensor fa = uniform_tensor({1, 4, 6, 6}, rng, 0, 1);
  Tensor fb = uniform_tensor({1, 4, 6, 6}, rng, 0, 1);
  Tensor out1 = dsb_forward(fa, fb, straight);
  Tensor out2 = dsb_forward(fa, fb, shuffled);
  for (long i = 0; i < out1.size(); ++i)
    CHECK(std::abs(out1.value()[i] - out2.value()[i]) <= 1e-12);
}

TEST_CASE("effective tap statistics") {
  AttentionWeights uniform{Tensor::full({1, 1, 9, 2, 2}, 1.0 / 9.0)};
  EffectiveTapStats stats = effective_tap_stats(uniform);
  CHECK(stats.mean_participation_ratio == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(stats.mean_active_taps == 9.0);

  Array onehot = Array::Zero(9);
  onehot[3] = 1.0;
  AttentionWeights peaked{Tensor::from_array({1, 1, 9, 1, 1}, onehot)};
  stats = effective_tap_stats(peaked);
  CHECK(stats.mean_participation_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats.max_active_taps == 1);

  Rng rng(107);
  Tensor q = uniform_tensor({1, 2, 2, 4, 4}, rng, -2, 2);
  Tensor k = uniform_tensor({1, 2, 2, 9, 4, 4}, rng, -2, 2);
  stats = effective_tap_stats(point_attention(q, k));
  CHECK(stats.mean_participation_ratio <= 9.0);
  CHECK(stats.max_active_taps <= 9);
}

TEST_CASE("flops grow with taps while parameters stay in the offset head") {
  const OpCost c9 = count_flops_params(16, 4, 9, 8, 8);
  const OpCost c18 = count_flops_params(16, 4, 18, 8, 8);
  CHECK(c18.flops > c9.flops);
  // params move only by the offset-head output layer: 2U*C*9 weights + 2U biases
  const auto head = [](std::uint64_t u) { return 2 * u * 16 * 9 + 2 * u; };
  CHECK(c18.params - head(18) == c9.params - head(9));

  // flops are affine in the tap count; the per-tap slope scales exactly
  const OpCost c1 = count_flops_params(16, 4, 1, 8, 8);
  const OpCost c2 = count_flops_params(16, 4, 2, 8, 8);
  const OpCost c3 = count_flops_params(16, 4, 3, 8, 8);
  const std::uint64_t slope = c2.flops - c1.flops;
  CHECK(c3.flops - c2.flops == slope);
  const std::uint64_t intercept = c1.flops - slope;
  CHECK(c9.flops - intercept == 9 * (c1.flops - intercept));

  CHECK_THROWS_WITH_AS(count_flops_params(0, 1, 9, 8, 8), doctest::Contains("degenerate"),
                       std::invalid_argument);
}

TEST_CASE("attention export emits the documented CSV") {
  Rng rng(109);
  Tensor q = uniform_tensor({1, 2, 2, 4, 4}, rng, -1, 1);
  Tensor k = uniform_tensor({1, 2, 2, 3, 4, 4}, rng, -1, 1);
  AttentionWeights rho = point_attention(q, k);
  std::ostringstream out;
  export_attention_csv(rho, {{1, 2}, {3, 0}}, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "b,head,tap,y,x,weight");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * 1 * 2 * 3);  // pixels * batch * heads * taps
  CHECK_THROWS_AS(export_attention_csv(rho, {{9, 9}}, out), std::invalid_argument);
}
