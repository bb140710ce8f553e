#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stvg/tape.hpp"
#include "stvg/tensor.hpp"

// Differentiable primitives. Every op validates shapes, checks its output for
// non-finite values, and (when a tape is active and an input requires grad)
// records its reverse step on the active tape. All tensors are row-major f64.
namespace stvg::ops {

// ---- elementwise, same shape ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties follow a
Tensor maximum(const Tensor& a, const Tensor& b);  // ties follow a

// ---- elementwise, unary ----
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor clamp_min(const Tensor& x, double lo);
Tensor smooth_l1(const Tensor& x);  // 0.5 x^2 for |x|<1, |x|-0.5 otherwise

// ---- scalar broadcast ----
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);      // bias over last axis
Tensor mul_bscalar(const Tensor& x, const Tensor& s);      // s is a one-element tensor
Tensor div_bscalar(const Tensor& x, const Tensor& s);

// ---- matrix ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m×k]·[k×n] -> [m×n]
Tensor transpose(const Tensor& x);                // rank 2

// ---- convolution (cross-correlation, symmetric zero padding, odd kernel) ----
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);
// x: [T×C_in], w: [C_out×C_in×k], bias: [C_out] -> [T×C_out]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);
// x: [H×W×C_in], w: [C_out×C_in×k×k], bias: [C_out] -> [H×W×C_out]

// ---- normalization / activation over rows ----
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// ---- reductions ----
Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor max_axis(const Tensor& x, std::size_t axis);  // ties: lowest index

// ---- shape / movement ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor select0(const Tensor& x, std::size_t i);              // x[i, ...]
Tensor slice0(const Tensor& x, std::size_t r0, std::size_t r1);  // rows [r0, r1)
Tensor slice_last(const Tensor& x, std::size_t c0, std::size_t c1);
Tensor stack0(std::span<const Tensor> parts);                // new leading axis
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx);
Tensor transpose01(const Tensor& x);  // [A×B×...] -> [B×A×...]

// ---- video-specific ----
Tensor avg_pool2x2(const Tensor& x);  // [H×W×C] -> [H/2×W/2×C]
Tensor tile_spatial(const Tensor& x, std::size_t h, std::size_t w);
// [T×C] -> [T×h×w×C], every spatial site gets the frame vector
Tensor temporal_diff(const Tensor& x);  // [T×D]: out[t] = x[t+1]-x[t], last row 0

}  // namespace stvg::ops
