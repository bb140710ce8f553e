#pragma once

#include <string>
#include <vector>

#include "stvg/tensor.hpp"

// Bottleneck residual adapters and low-rank linear adaptation: the only
// trainable insertions into the frozen backbone. Down-projections and biases
// start at zero, so a fresh adapter is an exact identity map and a fresh
// low-rank update leaves the frozen projection untouched.
namespace stvg::adapters {

enum class AdapterKind { Temporal, TemporalDiff, SpatioTemporal };

struct AdapterParams {
  AdapterKind kind = AdapterKind::Temporal;
  std::size_t channels = 0;    // C, the adapted feature width
  std::size_t bottleneck = 0;  // C' = C / ratio
  std::size_t kernel = 3;
  Tensor w_up, b_up;       // [C×C'], [C']
  Tensor conv1_w, conv1_b; // [C'×C'×k], [C'] — temporal branch
  Tensor conv2_w, conv2_b; // [C'×C'×k×k], [C'] — spatial branch, SpatioTemporal only
  Tensor w_down, b_down;   // [C'×C], [C], zero at init

  std::vector<NamedParam> named(const std::string& prefix) const;
  std::size_t param_count() const;
};

// W_up and the branch convolutions get seeded uniform values scaled by
// 1/sqrt(fan_in); W_down and every bias start at zero.
AdapterParams init_adapter(AdapterKind kind, std::size_t channels, std::size_t ratio,
                           std::size_t kernel, Rng& rng);

// z: [T×D] -> z + Conv1d(z·W_up)·W_down
Tensor temporal_adapter(const Tensor& z, const AdapterParams& p);

// forward frame difference, final row zero-padded: out[t] = q[t+1] - q[t]
Tensor temporal_diff_operator(const Tensor& q);

// q: [T×D] -> q + Conv1d(diff(q)·W_up)·W_down
Tensor temporal_diff_adapter(const Tensor& q, const AdapterParams& p);

// z: [T×H×W×C]. Up-project channels, run a per-frame 3x3 spatial convolution
// in parallel with a temporal convolution over the spatially pooled sequence
// (broadcast back over the grid), add the branches, down-project, residual.
Tensor st_adapter(const Tensor& z, const AdapterParams& p);

struct LoRAParams {
  Tensor a, b;  // [d×r], [r×d']; b is zero at init
  double alpha = 8.0;
  std::size_t rank = 4;

  std::vector<NamedParam> named(const std::string& prefix) const;
};

LoRAParams init_lora(std::size_t d_in, std::size_t d_out, std::size_t rank, double alpha,
                     Rng& rng);

// x·W_frozen + (alpha/rank)·x·A·B; the frozen weight receives no gradient.
Tensor lora_linear(const Tensor& x, const Tensor& w_frozen, const LoRAParams& q);

}  // namespace stvg::adapters
