#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "stvg/errors.hpp"
#include "stvg/ops.hpp"
#include "stvg/tape.hpp"
#include "stvg/tensor.hpp"
#include "test_util.hpp"

using namespace stvg;
namespace op = stvg::ops;
using testutil::check_op;
using testutil::max_abs_diff;

namespace {

Tensor rnd(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
           bool rg = true) {
  Rng rng(seed);
  Tensor t = Tensor::uniform(std::move(shape), rng, lo, hi);
  t.set_requires_grad(rg);
  return t;
}

}  // namespace

TEST_CASE("rng streams are deterministic") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42), d(43);
  CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("matmul forward hand examples") {
  Tensor eye = Tensor::from({1, 0, 0, 1}, {2, 2});
  Tensor m = Tensor::from({1, 2, 3, 4}, {2, 2});
  Tensor r = op::matmul(eye, m);
  CHECK(max_abs_diff(r.value(), m.value()) == 0.0);

  Tensor flip = Tensor::from({0, 1, 1, 0}, {2, 2});
  Tensor p = op::matmul(m, flip);
  std::vector<double> expected{2, 1, 4, 3};
  CHECK(max_abs_diff(p.value(), expected) == 0.0);
}

TEST_CASE("matmul rejects mismatched shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(op::matmul(a, b),
                       doctest::Contains("[2, 3]"), DimensionError);
}

TEST_CASE("conv1d hand examples") {
  // x = [1,2,3], w = [1,0,-1]: zero padded cross-correlation.
  Tensor x = Tensor::from({1, 2, 3}, {3, 1});
  Tensor w = Tensor::from({1, 0, -1}, {1, 1, 3});
  Tensor b = Tensor::zeros({1});
  Tensor y = op::conv1d(x, w, b);
  std::vector<double> expected{-2, -2, 2};
  CHECK(max_abs_diff(y.value(), expected) == 0.0);

  // delta kernel reproduces the input
  Tensor xr = rnd({5, 3}, 1, -2, 2, false);
  Tensor wd = Tensor::zeros({3, 3, 3});
  {
    auto wv = wd.mutable_value();
    for (std::size_t c = 0; c < 3; ++c) wv[(c * 3 + c) * 3 + 1] = 1.0;
  }
  Tensor yd = op::conv1d(xr, wd, Tensor::zeros({3}));
  CHECK(max_abs_diff(yd.value(), xr.value()) == 0.0);

  // all-zero weights and bias give zero output
  Tensor yz = op::conv1d(xr, Tensor::zeros({3, 3, 3}), Tensor::zeros({3}));
  for (double v : yz.value()) CHECK(v == 0.0);
}

TEST_CASE("conv1d rejects even kernels") {
  Tensor x = Tensor::zeros({4, 2});
  Tensor w = Tensor::zeros({2, 2, 4});
  CHECK_THROWS_AS(op::conv1d(x, w, Tensor::zeros({2})), ConfigError);
}

TEST_CASE("conv2d hand examples") {
  Tensor x = rnd({4, 4, 2}, 3, -1, 1, false);

  // 3x3 delta kernel reproduces the input
  Tensor wd = Tensor::zeros({2, 2, 3, 3});
  {
    auto wv = wd.mutable_value();
    for (std::size_t c = 0; c < 2; ++c) wv[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
  }
  Tensor yd = op::conv2d(x, wd, Tensor::zeros({2}));
  CHECK(max_abs_diff(yd.value(), x.value()) == 0.0);

  // 1x1 kernel with weight 2 scales the input
  Tensor w1 = Tensor::zeros({2, 2, 1, 1});
  {
    auto wv = w1.mutable_value();
    wv[(0 * 2 + 0)] = 2.0;
    wv[(1 * 2 + 1)] = 2.0;
  }
  Tensor ys = op::conv2d(x, w1, Tensor::zeros({2}));
  const auto xv = x.value();
  const auto yv = ys.value();
  for (std::size_t i = 0; i < xv.size(); ++i) CHECK(yv[i] == doctest::Approx(2 * xv[i]).epsilon(1e-15));

  // channel mismatch
  Tensor wbad = Tensor::zeros({2, 3, 3, 3});
  CHECK_THROWS_AS(op::conv2d(x, wbad, Tensor::zeros({2})), DimensionError);
}

TEST_CASE("softmax forward examples and properties") {
  Tensor z = Tensor::from({0, 0}, {2});
  auto s = op::softmax(z, 0);
  CHECK(s.value()[0] == doctest::Approx(0.5).epsilon(1e-15));

  Tensor l = Tensor::from({std::log(2.0), 0.0}, {2});
  auto s2 = op::softmax(l, 0);
  CHECK(s2.value()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(s2.value()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  // rows sum to one and shifting is a no-op, both within 1e-12
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = Tensor::uniform({4, 7}, rng, -5, 5);
    Tensor y = op::softmax(x, 1);
    const auto yv = y.value();
    for (std::size_t r = 0; r < 4; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 7; ++c) acc += yv[r * 7 + c];
      CHECK(std::abs(acc - 1.0) < 1e-12);
    }
    const double c0 = rng.uniform(-100, 100);
    Tensor shifted = op::add_scalar(x, c0);
    Tensor y2 = op::softmax(shifted, 1);
    CHECK(max_abs_diff(y.value(), y2.value()) < 1e-12);
  }
}

TEST_CASE("layer_norm forward examples") {
  Tensor g1 = Tensor::full({4}, 1.0);
  Tensor b0 = Tensor::zeros({4});

  Tensor c = Tensor::full({2, 4}, 3.25);
  Tensor yc = op::layer_norm(c, g1, b0);
  for (double v : yc.value()) CHECK(v == 0.0);

  Tensor row = Tensor::from({1, 3}, {1, 2});
  Tensor y = op::layer_norm(row, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-9));

  Tensor beta = Tensor::from({0.5, -0.25, 0, 2}, {4});
  Tensor x = rnd({3, 4}, 11, -2, 2, false);
  Tensor yb = op::layer_norm(x, Tensor::zeros({4}), beta);
  const auto ybv = yb.value();
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < 4; ++i) CHECK(ybv[r * 4 + i] == beta.value()[i]);
  }
}

TEST_CASE("backward leaves non-trainable tensors without grad") {
  Tensor a = rnd({3, 3}, 21, -1, 1, true);
  Tensor b = rnd({3, 3}, 22, -1, 1, false);
  {
    Tape tape;
    Tensor loss = op::sum(op::mul(a, b));
    tape.backward(loss);
  }
  CHECK(a.has_grad());
  CHECK_FALSE(b.has_grad());
}

TEST_CASE("forward replay is bitwise reproducible") {
  auto run = [] {
    Tensor x = rnd({4, 6}, 31, -2, 2, false);
    Tensor w = rnd({6, 5}, 32, -1, 1, false);
    Tensor g = Tensor::full({5}, 1.0);
    Tensor b = Tensor::zeros({5});
    Tensor y = op::softmax(op::layer_norm(op::gelu(op::matmul(x, w)), g, b), 1);
    const auto v = y.value();
    return std::vector<double>(v.begin(), v.end());
  };
  auto v1 = run();
  auto v2 = run();
  CHECK(testutil::bitwise_equal(v1, v2));
}

TEST_CASE("nested tapes are rejected") {
  Tape outer;
  CHECK_THROWS_AS(Tape{}, ConfigError);
}

TEST_CASE("temporal_diff forward") {
  Tensor q = Tensor::from({1, 3, 6}, {3, 1});
  Tensor d = op::temporal_diff(q);
  std::vector<double> expected{2, 3, 0};
  CHECK(max_abs_diff(d.value(), expected) == 0.0);

  Tensor single = Tensor::from({4.5}, {1, 1});
  CHECK(op::temporal_diff(single).value()[0] == 0.0);
}

// Every primitive's reverse-mode gradient is compared against central finite
// differences through the shared harness; linear ops get the tighter bound.
TEST_CASE("primitive gradients match finite differences") {
  auto a = rnd({3, 4}, 101);
  auto b = rnd({3, 4}, 102);
  auto bpos = rnd({3, 4}, 103, 0.5, 2.0);
  std::vector<NamedParam> two{{"a", true, a}, {"b", true, b}};
  std::vector<NamedParam> one{{"a", true, a}};
  std::vector<NamedParam> apos_only{{"bpos", true, bpos}};

  SUBCASE("add") {
    auto r = check_op([&] { return op::add(a, b); }, two, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("sub") {
    auto r = check_op([&] { return op::sub(a, b); }, two, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("mul") {
    auto r = check_op([&] { return op::mul(a, b); }, two, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("div") {
    std::vector<NamedParam> params{{"a", true, a}, {"bpos", true, bpos}};
    auto r = check_op([&] { return op::div(a, bpos); }, params, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("minimum-maximum") {
    auto r = check_op([&] { return op::minimum(a, b); }, two, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
    auto r2 = check_op([&] { return op::maximum(a, b); }, two, 1e-4);
    CHECK_MESSAGE(r2.pass, r2.summary());
  }
  SUBCASE("neg") {
    auto r = check_op([&] { return op::neg(a); }, one, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("exp") {
    auto r = check_op([&] { return op::exp(a); }, one, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("log") {
    auto r = check_op([&] { return op::log(bpos); }, apos_only, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("sqrt") {
    auto r = check_op([&] { return op::sqrt(bpos); }, apos_only, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("sigmoid") {
    auto r = check_op([&] { return op::sigmoid(a); }, one, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("gelu") {
    auto r = check_op([&] { return op::gelu(a); }, one, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("clamp_min") {
    auto r = check_op([&] { return op::clamp_min(a, 0.1); }, one, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("smooth_l1") {
    auto wide = rnd({3, 4}, 104, -3.0, 3.0);
    std::vector<NamedParam> params{{"wide", true, wide}};
    auto r = check_op([&] { return op::smooth_l1(wide); }, params, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("scale-add_scalar") {
    auto r = check_op([&] { return op::scale(a, -2.5); }, one, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
    auto r2 = check_op([&] { return op::add_scalar(a, 0.75); }, one, 1e-6);
    CHECK_MESSAGE(r2.pass, r2.summary());
  }
  SUBCASE("add_bias") {
    auto bias = rnd({4}, 105);
    std::vector<NamedParam> params{{"a", true, a}, {"bias", true, bias}};
    auto r = check_op([&] { return op::add_bias(a, bias); }, params, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("mul_bscalar-div_bscalar") {
    auto s = rnd({1}, 106, 0.5, 1.5);
    std::vector<NamedParam> params{{"a", true, a}, {"s", true, s}};
    auto r = check_op([&] { return op::mul_bscalar(a, s); }, params, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
    auto r2 = check_op([&] { return op::div_bscalar(a, s); }, params, 1e-4);
    CHECK_MESSAGE(r2.pass, r2.summary());
  }
  SUBCASE("matmul") {
    auto m1 = rnd({3, 5}, 107);
    auto m2 = rnd({5, 2}, 108);
    std::vector<NamedParam> params{{"m1", true, m1}, {"m2", true, m2}};
    auto r = check_op([&] { return op::matmul(m1, m2); }, params, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("transpose") {
    auto r = check_op([&] { return op::transpose(a); }, one, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("conv1d") {
    auto x = rnd({6, 3}, 109);
    auto w = rnd({4, 3, 3}, 110);
    auto bias = rnd({4}, 111);
    std::vector<NamedParam> params{{"x", true, x}, {"w", true, w}, {"bias", true, bias}};
    auto r = check_op([&] { return op::conv1d(x, w, bias); }, params, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("conv2d") {
    auto x = rnd({4, 4, 2}, 112);
    auto w = rnd({3, 2, 3, 3}, 113);
    auto bias = rnd({3}, 114);
    std::vector<NamedParam> params{{"x", true, x}, {"w", true, w}, {"bias", true, bias}};
    auto r = check_op([&] { return op::conv2d(x, w, bias); }, params, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("softmax") {
    auto r = check_op([&] { return op::softmax(a, 1); }, one, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
    auto r2 = check_op([&] { return op::softmax(a, 0); }, one, 1e-4);
    CHECK_MESSAGE(r2.pass, r2.summary());
  }
  SUBCASE("layer_norm") {
    auto gamma = rnd({4}, 115, 0.5, 1.5);
    auto beta = rnd({4}, 116);
    std::vector<NamedParam> params{{"a", true, a}, {"gamma", true, gamma}, {"beta", true, beta}};
    auto r = check_op([&] { return op::layer_norm(a, gamma, beta); }, params, 1e-4);
    CHECK_MESSAGE(r.pass, r.summary());
  }
  SUBCASE("reductions") {
    auto r = check_op([&] { return op::sum(a); }, one, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
    auto r2 = check_op([&] { return op::mean(a); }, one, 1e-6);
    CHECK_MESSAGE(r2.pass, r2.summary());
    auto r3 = check_op([&] { return op::sum_axis(a, 0); }, one, 1e-6);
    CHECK_MESSAGE(r3.pass, r3.summary());
    auto r4 = check_op([&] { return op::mean_axis(a, 1); }, one, 1e-6);
    CHECK_MESSAGE(r4.pass, r4.summary());
    auto r5 = check_op([&] { return op::max_axis(a, 1); }, one, 1e-4);
    CHECK_MESSAGE(r5.pass, r5.summary());
  }
  SUBCASE("movement") {
    auto r = check_op([&] { return op::reshape(a, {4, 3}); }, one, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
    auto r2 = check_op([&] { return op::select0(a, 1); }, one, 1e-6);
    CHECK_MESSAGE(r2.pass, r2.summary());
    auto r3 = check_op([&] { return op::slice0(a, 1, 3); }, one, 1e-6);
    CHECK_MESSAGE(r3.pass, r3.summary());
    auto r4 = check_op([&] { return op::slice_last(a, 1, 3); }, one, 1e-6);
    CHECK_MESSAGE(r4.pass, r4.summary());
    auto r5 = check_op(
        [&] {
          std::vector<Tensor> parts{a, b};
          return op::stack0(parts);
        },
        two, 1e-6);
    CHECK_MESSAGE(r5.pass, r5.summary());
    auto r6 = check_op(
        [&] {
          std::vector<Tensor> parts{a, b};
          return op::concat(parts, 1);
        },
        two, 1e-6);
    CHECK_MESSAGE(r6.pass, r6.summary());
    auto r7 = check_op([&] { return op::gather_rows(a, {2, 0, 2}); }, one, 1e-6);
    CHECK_MESSAGE(r7.pass, r7.summary());
    auto t3 = rnd({2, 3, 4}, 117);
    std::vector<NamedParam> p3{{"t3", true, t3}};
    auto r8 = check_op([&] { return op::transpose01(t3); }, p3, 1e-6);
    CHECK_MESSAGE(r8.pass, r8.summary());
  }
  SUBCASE("video ops") {
    auto x = rnd({4, 4, 3}, 118);
    std::vector<NamedParam> px{{"x", true, x}};
    auto r = check_op([&] { return op::avg_pool2x2(x); }, px, 1e-6);
    CHECK_MESSAGE(r.pass, r.summary());
    auto t = rnd({3, 5}, 119);
    std::vector<NamedParam> pt{{"t", true, t}};
    auto r2 = check_op([&] { return op::tile_spatial(t, 2, 3); }, pt, 1e-6);
    CHECK_MESSAGE(r2.pass, r2.summary());
    auto r3 = check_op([&] { return op::temporal_diff(t); }, pt, 1e-6);
    CHECK_MESSAGE(r3.pass, r3.summary());
  }
}
