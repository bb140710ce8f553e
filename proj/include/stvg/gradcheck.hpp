#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stvg/tensor.hpp"

namespace stvg {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  std::size_t coords_per_tensor = 20;
  // Coordinates where both the analytic and the finite-difference value fall
  // below this band are counted as matching zeros; central differences of a
  // loss of magnitude O(1) carry ~1e-8 of cancellation noise, so tiny true
  // gradients cannot be resolved against it.
  double zero_band = 1e-6;
  std::uint64_t seed = 0x9d2c5680;
};

struct GradCheckCoord {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::size_t zero_pairs = 0;
  GradCheckCoord worst;
  std::vector<GradCheckCoord> failures;

  std::string summary() const;
};

// Compares the reverse-mode gradient of the scalar produced by `f` against
// central finite differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate,
// over the given parameters. `f` must be deterministic: it is re-evaluated
// many times with nudged parameter values and must build a fresh graph each
// call. Parameters are restored bit-exactly afterwards.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::span<const NamedParam> params,
                           const GradCheckOptions& opt = {});

}  // namespace stvg
