#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <span>
#include <vector>

#include "stvg/gradcheck.hpp"
#include "stvg/ops.hpp"
#include "stvg/tensor.hpp"

namespace testutil {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

// ---- plain-loop reference kernels, independent of the engine ----

inline std::vector<double> naive_matmul(std::span<const double> a, std::span<const double> b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> y(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      y[i * n + j] = acc;
    }
  }
  return y;
}

// x: [T×Cin], w: [Cout×Cin×k], same zero padding, cross-correlation.
inline std::vector<double> naive_conv1d(std::span<const double> x, std::span<const double> w,
                                        std::span<const double> bias, std::size_t T,
                                        std::size_t cin, std::size_t cout, std::size_t k) {
  std::vector<double> y(T * cout, 0.0);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t co = 0; co < cout; ++co) {
      double acc = bias.empty() ? 0.0 : bias[co];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          acc += x[static_cast<std::size_t>(s) * cin + ci] * w[(co * cin + ci) * k + j];
        }
      }
      y[t * cout + co] = acc;
    }
  }
  return y;
}

// x: [H×W×Cin], w: [Cout×Cin×k×k].
inline std::vector<double> naive_conv2d(std::span<const double> x, std::span<const double> w,
                                        std::span<const double> bias, std::size_t H,
                                        std::size_t W, std::size_t cin, std::size_t cout,
                                        std::size_t k) {
  std::vector<double> y(H * W * cout, 0.0);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t u = 0; u < k; ++u) {
          const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(h + u) - pad;
          if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t v = 0; v < k; ++v) {
            const std::ptrdiff_t sw = static_cast<std::ptrdiff_t>(c + v) - pad;
            if (sw < 0 || sw >= static_cast<std::ptrdiff_t>(W)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              acc += x[(static_cast<std::size_t>(sh) * W + static_cast<std::size_t>(sw)) * cin +
                       ci] *
                     w[((co * cin + ci) * k + u) * k + v];
            }
          }
        }
        y[(h * W + c) * cout + co] = acc;
      }
    }
  }
  return y;
}

// Finite-difference check of an op: the objective is a fixed random weighting
// of the op output, so every Jacobian direction gets exercised.
inline stvg::GradCheckReport check_op(
    const std::function<stvg::Tensor()>& build_output,
    std::span<const stvg::NamedParam> inputs, double tol = 1e-6,
    std::uint64_t weight_seed = 77) {
  stvg::Tensor weights;
  auto objective = [&]() {
    stvg::Tensor out = build_output();
    if (!weights.defined()) {
      stvg::Rng wrng(weight_seed);
      weights = stvg::Tensor::uniform(out.shape(), wrng, -1.0, 1.0);
    }
    return stvg::ops::sum(stvg::ops::mul(out, weights));
  };
  stvg::GradCheckOptions opt;
  opt.tol = tol;
  return stvg::grad_check(objective, inputs, opt);
}

}  // namespace testutil
