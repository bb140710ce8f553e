#include "stvg/adapters.hpp"

#include <cmath>

#include "stvg/errors.hpp"
#include "stvg/ops.hpp"

namespace stvg::adapters {

namespace op = stvg::ops;

namespace {

Tensor scaled_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::uniform(std::move(shape), rng, -bound, bound);
  t.set_requires_grad(true);
  return t;
}

Tensor trainable_zeros(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

void check_channels(const char* op_name, const Tensor& x, const AdapterParams& p,
                    std::size_t axis) {
  if (x.dim(axis) != p.channels) {
    throw DimensionError(std::string(op_name) + ": input " + shape_str(x.shape()) +
                         " does not match adapter width " + std::to_string(p.channels));
  }
}

// The shared bottleneck: conv1d(x·W_up)·W_down over a [T×C] sequence.
Tensor branch_1d(const Tensor& x, const AdapterParams& p) {
  Tensor up = op::add_bias(op::matmul(x, p.w_up), p.b_up);
  Tensor c = op::conv1d(up, p.conv1_w, p.conv1_b);
  return op::add_bias(op::matmul(c, p.w_down), p.b_down);
}

}  // namespace

AdapterParams init_adapter(AdapterKind kind, std::size_t channels, std::size_t ratio,
                           std::size_t kernel, Rng& rng) {
  if (ratio == 0 || channels == 0 || channels % ratio != 0) {
    throw ConfigError("init_adapter: bottleneck ratio " + std::to_string(ratio) +
                      " must divide channel width " + std::to_string(channels));
  }
  if (kernel % 2 == 0) {
    throw ConfigError("init_adapter: kernel size must be odd, got " + std::to_string(kernel));
  }
  AdapterParams p;
  p.kind = kind;
  p.channels = channels;
  p.bottleneck = channels / ratio;
  p.kernel = kernel;
  const std::size_t cp = p.bottleneck;
  p.w_up = scaled_uniform({channels, cp}, channels, rng);
  p.b_up = trainable_zeros({cp});
  p.conv1_w = scaled_uniform({cp, cp, kernel}, cp * kernel, rng);
  p.conv1_b = trainable_zeros({cp});
  if (kind == AdapterKind::SpatioTemporal) {
    p.conv2_w = scaled_uniform({cp, cp, kernel, kernel}, cp * kernel * kernel, rng);
    p.conv2_b = trainable_zeros({cp});
  }
  p.w_down = trainable_zeros({cp, channels});
  p.b_down = trainable_zeros({channels});
  return p;
}

std::vector<NamedParam> AdapterParams::named(const std::string& prefix) const {
  std::vector<NamedParam> out;
  out.push_back({prefix + ".w_up", w_up.requires_grad(), w_up});
  out.push_back({prefix + ".b_up", b_up.requires_grad(), b_up});
  out.push_back({prefix + ".conv1.w", conv1_w.requires_grad(), conv1_w});
  out.push_back({prefix + ".conv1.b", conv1_b.requires_grad(), conv1_b});
  if (kind == AdapterKind::SpatioTemporal) {
    out.push_back({prefix + ".conv2.w", conv2_w.requires_grad(), conv2_w});
    out.push_back({prefix + ".conv2.b", conv2_b.requires_grad(), conv2_b});
  }
  out.push_back({prefix + ".w_down", w_down.requires_grad(), w_down});
  out.push_back({prefix + ".b_down", b_down.requires_grad(), b_down});
  return out;
}

std::size_t AdapterParams::param_count() const {
  std::size_t n = w_up.numel() + b_up.numel() + conv1_w.numel() + conv1_b.numel() +
                  w_down.numel() + b_down.numel();
  if (kind == AdapterKind::SpatioTemporal) n += conv2_w.numel() + conv2_b.numel();
  return n;
}

Tensor temporal_adapter(const Tensor& z, const AdapterParams& p) {
  if (z.rank() != 2) {
    throw DimensionError("temporal_adapter: expected [T×D], got " + shape_str(z.shape()));
  }
  check_channels("temporal_adapter", z, p, 1);
  return op::add(z, branch_1d(z, p));
}

Tensor temporal_diff_operator(const Tensor& q) {
  if (q.rank() != 2) {
    throw DimensionError("temporal_diff_operator: expected [T×D], got " + shape_str(q.shape()));
  }
  return op::temporal_diff(q);
}

Tensor temporal_diff_adapter(const Tensor& q, const AdapterParams& p) {
  if (q.rank() != 2) {
    throw DimensionError("temporal_diff_adapter: expected [T×D], got " + shape_str(q.shape()));
  }
  check_channels("temporal_diff_adapter", q, p, 1);
  return op::add(q, branch_1d(op::temporal_diff(q), p));
}

Tensor st_adapter(const Tensor& z, const AdapterParams& p) {
  if (z.rank() != 4) {
    throw DimensionError("st_adapter: expected [T×H×W×C], got " + shape_str(z.shape()));
  }
  check_channels("st_adapter", z, p, 3);
  const std::size_t T = z.dim(0), H = z.dim(1), W = z.dim(2), C = z.dim(3);
  const std::size_t cp = p.bottleneck;

  Tensor up = op::add_bias(op::matmul(op::reshape(z, {T * H * W, C}), p.w_up), p.b_up);
  Tensor up4 = op::reshape(up, {T, H, W, cp});

  // spatial branch: per-frame 2D convolution
  std::vector<Tensor> frames;
  frames.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    frames.push_back(op::conv2d(op::select0(up4, t), p.conv2_w, p.conv2_b));
  }
  Tensor spatial = op::stack0(frames);

  // temporal branch: pool the grid away, convolve over time, broadcast back
  Tensor pooled = op::mean_axis(op::mean_axis(up4, 1), 1);  // [T×C']
  Tensor temporal = op::tile_spatial(op::conv1d(pooled, p.conv1_w, p.conv1_b), H, W);

  Tensor fused = op::add(spatial, temporal);
  Tensor down =
      op::add_bias(op::matmul(op::reshape(fused, {T * H * W, cp}), p.w_down), p.b_down);
  return op::add(z, op::reshape(down, {T, H, W, C}));
}

LoRAParams init_lora(std::size_t d_in, std::size_t d_out, std::size_t rank, double alpha,
                     Rng& rng) {
  if (rank == 0 || rank >= d_in) {
    throw ConfigError("init_lora: rank " + std::to_string(rank) +
                      " must be positive and below the input width " + std::to_string(d_in));
  }
  LoRAParams q;
  q.rank = rank;
  q.alpha = alpha;
  q.a = scaled_uniform({d_in, rank}, d_in, rng);
  q.b = trainable_zeros({rank, d_out});
  return q;
}

std::vector<NamedParam> LoRAParams::named(const std::string& prefix) const {
  return {{prefix + ".a", a.requires_grad(), a}, {prefix + ".b", b.requires_grad(), b}};
}

Tensor lora_linear(const Tensor& x, const Tensor& w_frozen, const LoRAParams& q) {
  if (x.rank() != 2 || w_frozen.rank() != 2 || x.dim(1) != w_frozen.dim(0)) {
    throw DimensionError("lora_linear: incompatible shapes " + shape_str(x.shape()) + " x " +
                         shape_str(w_frozen.shape()));
  }
  if (q.a.dim(0) != x.dim(1) || q.b.dim(1) != w_frozen.dim(1)) {
    throw DimensionError("lora_linear: low-rank factors " + shape_str(q.a.shape()) + ", " +
                         shape_str(q.b.shape()) + " do not match " + shape_str(w_frozen.shape()));
  }
  Tensor base = op::matmul(x, w_frozen);
  Tensor update = op::matmul(op::matmul(x, q.a), q.b);
  return op::add(base, op::scale(update, q.alpha / static_cast<double>(q.rank)));
}

}  // namespace stvg::adapters
