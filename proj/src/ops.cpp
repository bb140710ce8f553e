#include "stvg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "stvg/errors.hpp"

namespace stvg::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

bool wants_grad(std::initializer_list<Tensor> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

void check_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

Tensor finish(const char* op, Shape shape, std::vector<double> value, bool rg) {
  check_finite(op, value);
  Tensor out = Tensor::from(std::move(value), std::move(shape));
  out.set_requires_grad(rg);
  return out;
}

std::vector<double>& ensure_grad(const Tensor& t) {
  auto* im = t.impl();
  if (im->grad.empty()) im->grad.assign(im->value.size(), 0.0);
  return im->grad;
}

// Returns nullptr when the output never received gradient.
const std::vector<double>* out_grad(const Tensor& t) {
  const auto& g = t.impl()->grad;
  return g.empty() ? nullptr : &g;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// da, db: given (go_i, a_i, b_i, y_i) produce the two partials.
template <typename Fwd, typename Da, typename Db>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  check_same_shape(op, a, b);
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(av[i], bv[i]);
  bool rg = wants_grad({a, b});
  Tensor out = finish(op, a.shape(), std::move(y), rg);
  if (rg) {
    Tape::active()->record(op, [op, a, b, out, da, db] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto av = a.value();
      const auto bv = b.value();
      const auto yv = out.value();
      if (a.requires_grad()) {
        auto& ga = ensure_grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += da((*go)[i], av[i], bv[i], yv[i]);
      }
      if (b.requires_grad()) {
        auto& gb = ensure_grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db((*go)[i], av[i], bv[i], yv[i]);
      }
    });
  }
  return out;
}

// dfn: given (go_i, x_i, y_i) produce the partial.
template <typename Fwd, typename Dfn>
Tensor unary_op(const char* op, const Tensor& x, Fwd fwd, Dfn dfn) {
  const auto xv = x.value();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
  bool rg = wants_grad({x});
  Tensor out = finish(op, x.shape(), std::move(y), rg);
  if (rg) {
    Tape::active()->record(op, [op, x, out, dfn] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto xv = x.value();
      const auto yv = out.value();
      auto& gx = ensure_grad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dfn((*go)[i], xv[i], yv[i]);
    });
  }
  return out;
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const char* op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(x.shape()));
  }
  AxisSplit s{1, x.dim(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) s.inner *= x.dim(i);
  return s;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  return out;
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double go, double, double, double) { return go; },
      [](double go, double, double, double) { return go; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double go, double, double, double) { return go; },
      [](double go, double, double, double) { return -go; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double go, double, double bv, double) { return go * bv; },
      [](double go, double av, double, double) { return go * av; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double go, double, double bv, double) { return go / bv; },
      [](double go, double av, double bv, double) { return -go * av / (bv * bv); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double go, double av, double bv, double) { return av <= bv ? go : 0.0; },
      [](double go, double av, double bv, double) { return av <= bv ? 0.0 : go; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double go, double av, double bv, double) { return av >= bv ? go : 0.0; },
      [](double go, double av, double bv, double) { return av >= bv ? 0.0 : go; });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; },
      [](double go, double, double) { return -go; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double go, double, double y) { return go * y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double go, double xv, double) { return go / xv; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double go, double, double y) { return go / (2.0 * y); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double go, double, double y) { return go * y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      "gelu", x,
      [](double v) {
        double u = kGeluK * (v + kGeluA * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(u));
      },
      [](double go, double v, double) {
        double u = kGeluK * (v + kGeluA * v * v * v);
        double t = std::tanh(u);
        double du = kGeluK * (1.0 + 3.0 * kGeluA * v * v);
        return go * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      });
}

Tensor clamp_min(const Tensor& x, double lo) {
  return unary_op(
      "clamp_min", x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double go, double xv, double) { return xv > lo ? go : 0.0; });
}

Tensor smooth_l1(const Tensor& x) {
  return unary_op(
      "smooth_l1", x,
      [](double v) {
        double a = std::abs(v);
        return a < 1.0 ? 0.5 * v * v : a - 0.5;
      },
      [](double go, double v, double) {
        if (std::abs(v) < 1.0) return go * v;
        return v > 0.0 ? go : -go;
      });
}

Tensor scale(const Tensor& x, double c) {
  return unary_op(
      "scale", x, [c](double v) { return c * v; },
      [c](double go, double, double) { return c * go; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op(
      "add_scalar", x, [c](double v) { return v + c; },
      [](double go, double, double) { return go; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || bias.dim(0) != x.dim(x.rank() - 1)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match last axis of " + shape_str(x.shape()));
  }
  const auto xv = x.value();
  const auto bv = bias.value();
  const std::size_t d = bv.size();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] + bv[i % d];
  bool rg = wants_grad({x, bias});
  Tensor out = finish("add_bias", x.shape(), std::move(y), rg);
  if (rg) {
    Tape::active()->record("add_bias", [x, bias, out, d] {
      const auto* go = out_grad(out);
      if (!go) return;
      if (x.requires_grad()) {
        auto& gx = ensure_grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i];
      }
      if (bias.requires_grad()) {
        auto& gb = ensure_grad(bias);
        for (std::size_t i = 0; i < go->size(); ++i) gb[i % d] += (*go)[i];
      }
    });
  }
  return out;
}

Tensor mul_bscalar(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("mul_bscalar: scale must have one element, got " +
                         shape_str(s.shape()));
  }
  const auto xv = x.value();
  const double sv = s.value()[0];
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * sv;
  bool rg = wants_grad({x, s});
  Tensor out = finish("mul_bscalar", x.shape(), std::move(y), rg);
  if (rg) {
    Tape::active()->record("mul_bscalar", [x, s, out] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto xv = x.value();
      const double sv = s.value()[0];
      if (x.requires_grad()) {
        auto& gx = ensure_grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i] * sv;
      }
      if (s.requires_grad()) {
        auto& gs = ensure_grad(s);
        double acc = 0.0;
        for (std::size_t i = 0; i < go->size(); ++i) acc += (*go)[i] * xv[i];
        gs[0] += acc;
      }
    });
  }
  return out;
}

Tensor div_bscalar(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("div_bscalar: divisor must have one element, got " +
                         shape_str(s.shape()));
  }
  const auto xv = x.value();
  const double sv = s.value()[0];
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] / sv;
  bool rg = wants_grad({x, s});
  Tensor out = finish("div_bscalar", x.shape(), std::move(y), rg);
  if (rg) {
    Tape::active()->record("div_bscalar", [x, s, out] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto xv = x.value();
      const double sv = s.value()[0];
      if (x.requires_grad()) {
        auto& gx = ensure_grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i] / sv;
      }
      if (s.requires_grad()) {
        auto& gs = ensure_grad(s);
        double acc = 0.0;
        for (std::size_t i = 0; i < go->size(); ++i) acc += (*go)[i] * xv[i];
        gs[0] += -acc / (sv * sv);
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> y(static_cast<std::size_t>(m * n));
  {
    CMap A(a.value().data(), m, k);
    CMap B(b.value().data(), k, n);
    MMap Y(y.data(), m, n);
    Y.noalias() = A * B;
  }
  bool rg = wants_grad({a, b});
  Tensor out = finish("matmul", {a.dim(0), b.dim(1)}, std::move(y), rg);
  if (rg) {
    Tape::active()->record("matmul", [a, b, out, m, k, n] {
      const auto* go = out_grad(out);
      if (!go) return;
      CMap GO(go->data(), m, n);
      if (a.requires_grad()) {
        CMap B(b.value().data(), k, n);
        MMap GA(ensure_grad(a).data(), m, k);
        GA.noalias() += GO * B.transpose();
      }
      if (b.requires_grad()) {
        CMap A(a.value().data(), m, k);
        MMap GB(ensure_grad(b).data(), k, n);
        GB.noalias() += A.transpose() * GO;
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) {
    throw DimensionError("transpose: expected rank 2, got " + shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto xv = x.value();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = xv[i * n + j];
  }
  bool rg = wants_grad({x});
  Tensor out = finish("transpose", {n, m}, std::move(y), rg);
  if (rg) {
    Tape::active()->record("transpose", [x, out, m, n] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += (*go)[j * m + i];
      }
    });
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 2 || w.rank() != 3 || bias.rank() != 1) {
    throw DimensionError("conv1d: expected x[T×C_in], w[C_out×C_in×k], bias[C_out], got " +
                         shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " +
                         shape_str(bias.shape()));
  }
  const std::size_t T = x.dim(0), cin = x.dim(1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (k % 2 == 0) {
    throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(k));
  }
  if (w.dim(1) != cin || bias.dim(0) != cout) {
    throw DimensionError("conv1d: channel mismatch, x " + shape_str(x.shape()) + " vs w " +
                         shape_str(w.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t pad = (k - 1) / 2;
  const auto xv = x.value();
  const auto wv = w.value();
  const auto bv = bias.value();
  std::vector<double> y(T * cout);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t co = 0; co < cout; ++co) {
      double acc = bv[co];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          acc += xv[static_cast<std::size_t>(src) * cin + ci] * wv[(co * cin + ci) * k + j];
        }
      }
      y[t * cout + co] = acc;
    }
  }
  bool rg = wants_grad({x, w, bias});
  Tensor out = finish("conv1d", {T, cout}, std::move(y), rg);
  if (rg) {
    Tape::active()->record("conv1d", [x, w, bias, out, T, cin, cout, k, pad] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto xv = x.value();
      const auto wv = w.value();
      const bool gx_on = x.requires_grad();
      const bool gw_on = w.requires_grad();
      const bool gb_on = bias.requires_grad();
      std::vector<double>* gx = gx_on ? &ensure_grad(x) : nullptr;
      std::vector<double>* gw = gw_on ? &ensure_grad(w) : nullptr;
      std::vector<double>* gb = gb_on ? &ensure_grad(bias) : nullptr;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t co = 0; co < cout; ++co) {
          const double g = (*go)[t * cout + co];
          if (g == 0.0) continue;
          if (gb_on) (*gb)[co] += g;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src =
                static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
            const std::size_t s = static_cast<std::size_t>(src);
            for (std::size_t ci = 0; ci < cin; ++ci) {
              if (gx_on) (*gx)[s * cin + ci] += g * wv[(co * cin + ci) * k + j];
              if (gw_on) (*gw)[(co * cin + ci) * k + j] += g * xv[s * cin + ci];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 3 || w.rank() != 4 || bias.rank() != 1) {
    throw DimensionError("conv2d: expected x[H×W×C_in], w[C_out×C_in×k×k], bias[C_out], got " +
                         shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " +
                         shape_str(bias.shape()));
  }
  const std::size_t H = x.dim(0), W = x.dim(1), cin = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (k % 2 == 0 || w.dim(3) != k) {
    throw ConfigError("conv2d: kernel must be odd and square, got " + shape_str(w.shape()));
  }
  if (w.dim(1) != cin || bias.dim(0) != cout) {
    throw DimensionError("conv2d: channel mismatch, x " + shape_str(x.shape()) + " vs w " +
                         shape_str(w.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto xv = x.value();
  const auto wv = w.value();
  const auto bv = bias.value();
  std::vector<double> y(H * W * cout);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = bv[co];
        for (std::size_t u = 0; u < k; ++u) {
          const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(h + u) - pad;
          if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t v = 0; v < k; ++v) {
            const std::ptrdiff_t sw = static_cast<std::ptrdiff_t>(c + v) - pad;
            if (sw < 0 || sw >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t base = (static_cast<std::size_t>(sh) * W + static_cast<std::size_t>(sw)) * cin;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              acc += xv[base + ci] * wv[((co * cin + ci) * k + u) * k + v];
            }
          }
        }
        y[(h * W + c) * cout + co] = acc;
      }
    }
  }
  bool rg = wants_grad({x, w, bias});
  Tensor out = finish("conv2d", {H, W, cout}, std::move(y), rg);
  if (rg) {
    Tape::active()->record("conv2d", [x, w, bias, out, H, W, cin, cout, k, pad] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto xv = x.value();
      const auto wv = w.value();
      const bool gx_on = x.requires_grad();
      const bool gw_on = w.requires_grad();
      const bool gb_on = bias.requires_grad();
      std::vector<double>* gx = gx_on ? &ensure_grad(x) : nullptr;
      std::vector<double>* gw = gw_on ? &ensure_grad(w) : nullptr;
      std::vector<double>* gb = gb_on ? &ensure_grad(bias) : nullptr;
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t c = 0; c < W; ++c) {
          for (std::size_t co = 0; co < cout; ++co) {
            const double g = (*go)[(h * W + c) * cout + co];
            if (g == 0.0) continue;
            if (gb_on) (*gb)[co] += g;
            for (std::size_t u = 0; u < k; ++u) {
              const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(h + u) - pad;
              if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t v = 0; v < k; ++v) {
                const std::ptrdiff_t sw = static_cast<std::ptrdiff_t>(c + v) - pad;
                if (sw < 0 || sw >= static_cast<std::ptrdiff_t>(W)) continue;
                const std::size_t base =
                    (static_cast<std::size_t>(sh) * W + static_cast<std::size_t>(sw)) * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  if (gx_on) (*gx)[base + ci] += g * wv[((co * cin + ci) * k + u) * k + v];
                  if (gw_on) (*gw)[((co * cin + ci) * k + u) * k + v] += g * xv[base + ci];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto sp = split_axis("softmax", x, axis);
  const auto xv = x.value();
  std::vector<double> y(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double mx = xv[base];
      for (std::size_t t = 1; t < sp.n; ++t) mx = std::max(mx, xv[base + t * sp.inner]);
      double z = 0.0;
      for (std::size_t t = 0; t < sp.n; ++t) {
        const double e = std::exp(xv[base + t * sp.inner] - mx);
        y[base + t * sp.inner] = e;
        z += e;
      }
      for (std::size_t t = 0; t < sp.n; ++t) y[base + t * sp.inner] /= z;
    }
  }
  bool rg = wants_grad({x});
  Tensor out = finish("softmax", x.shape(), std::move(y), rg);
  if (rg) {
    Tape::active()->record("softmax", [x, out, sp] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto yv = out.value();
      auto& gx = ensure_grad(x);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.n * sp.inner + i;
          double dot = 0.0;
          for (std::size_t t = 0; t < sp.n; ++t) {
            const std::size_t idx = base + t * sp.inner;
            dot += (*go)[idx] * yv[idx];
          }
          for (std::size_t t = 0; t < sp.n; ++t) {
            const std::size_t idx = base + t * sp.inner;
            gx[idx] += yv[idx] * ((*go)[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) {
    throw DimensionError("layer_norm: expected rank >= 1, got " + shape_str(x.shape()));
  }
  const std::size_t d = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != d || beta.dim(0) != d) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.value();
  const auto gv = gamma.value();
  const auto bv = beta.value();
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += xv[base + i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = xv[base + i] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      y[base + i] = (xv[base + i] - mu) * inv * gv[i] + bv[i];
    }
  }
  bool rg = wants_grad({x, gamma, beta});
  Tensor out = finish("layer_norm", x.shape(), std::move(y), rg);
  if (rg) {
    Tape::active()->record("layer_norm", [x, gamma, beta, out, rows, d, eps] {
      const auto* go = out_grad(out);
      if (!go) return;
      const auto xv = x.value();
      const auto gv = gamma.value();
      const bool gx_on = x.requires_grad();
      const bool gg_on = gamma.requires_grad();
      const bool gb_on = beta.requires_grad();
      std::vector<double>* gx = gx_on ? &ensure_grad(x) : nullptr;
      std::vector<double>* gg = gg_on ? &ensure_grad(gamma) : nullptr;
      std::vector<double>* gb = gb_on ? &ensure_grad(beta) : nullptr;
      const double dn = static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += xv[base + i];
        mu /= dn;
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double c = xv[base + i] - mu;
          var += c * c;
        }
        var /= dn;
        const double inv = 1.0 / std::sqrt(var + eps);
        double mean_a = 0.0, mean_ax = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double xhat = (xv[base + i] - mu) * inv;
          const double a = (*go)[base + i] * gv[i];
          mean_a += a;
          mean_ax += a * xhat;
          if (gg_on) (*gg)[i] += (*go)[base + i] * xhat;
          if (gb_on) (*gb)[i] += (*go)[base + i];
        }
        mean_a /= dn;
        mean_ax /= dn;
        if (gx_on) {
          for (std::size_t i = 0; i < d; ++i) {
            const double xhat = (xv[base + i] - mu) * inv;
            const double a = (*go)[base + i] * gv[i];
            (*gx)[base + i] += inv * (a - mean_a - xhat * mean_ax);
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const auto xv = x.value();
  double acc = 0.0;
  for (double v : xv) acc += v;
  bool rg = wants_grad({x});
  Tensor out = finish("sum", Shape{}, {acc}, rg);
  if (rg) {
    Tape::active()->record("sum", [x, out] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (auto& g : gx) g += (*go)[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const auto xv = x.value();
  double acc = 0.0;
  for (double v : xv) acc += v;
  const double n = static_cast<double>(xv.size());
  bool rg = wants_grad({x});
  Tensor out = finish("mean", Shape{}, {acc / n}, rg);
  if (rg) {
    Tape::active()->record("mean", [x, out, n] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      const double g = (*go)[0] / n;
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

namespace {

template <bool kMean>
Tensor reduce_axis_impl(const char* op, const Tensor& x, std::size_t axis) {
  const auto sp = split_axis(op, x, axis);
  const auto xv = x.value();
  std::vector<double> y(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t t = 0; t < sp.n; ++t) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        y[o * sp.inner + i] += xv[(o * sp.n + t) * sp.inner + i];
      }
    }
  }
  if (kMean) {
    for (auto& v : y) v /= static_cast<double>(sp.n);
  }
  bool rg = wants_grad({x});
  Tensor out = finish(op, drop_axis(x.shape(), axis), std::move(y), rg);
  if (rg) {
    Tape::active()->record(op, [x, out, sp] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      const double scale = kMean ? 1.0 / static_cast<double>(sp.n) : 1.0;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t t = 0; t < sp.n; ++t) {
          for (std::size_t i = 0; i < sp.inner; ++i) {
            gx[(o * sp.n + t) * sp.inner + i] += (*go)[o * sp.inner + i] * scale;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  return reduce_axis_impl<false>("sum_axis", x, axis);
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  return reduce_axis_impl<true>("mean_axis", x, axis);
}

Tensor max_axis(const Tensor& x, std::size_t axis) {
  const auto sp = split_axis("max_axis", x, axis);
  const auto xv = x.value();
  std::vector<double> y(sp.outer * sp.inner);
  auto argmax = std::make_shared<std::vector<std::size_t>>(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      std::size_t best_t = 0;
      double best = xv[(o * sp.n) * sp.inner + i];
      for (std::size_t t = 1; t < sp.n; ++t) {
        const double v = xv[(o * sp.n + t) * sp.inner + i];
        if (v > best) {
          best = v;
          best_t = t;
        }
      }
      y[o * sp.inner + i] = best;
      (*argmax)[o * sp.inner + i] = best_t;
    }
  }
  bool rg = wants_grad({x});
  Tensor out = finish("max_axis", drop_axis(x.shape(), axis), std::move(y), rg);
  if (rg) {
    Tape::active()->record("max_axis", [x, out, sp, argmax] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t t = (*argmax)[o * sp.inner + i];
          gx[(o * sp.n + t) * sp.inner + i] += (*go)[o * sp.inner + i];
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  const auto xv = x.value();
  std::vector<double> y(xv.begin(), xv.end());
  bool rg = wants_grad({x});
  Tensor out = finish("reshape", std::move(shape), std::move(y), rg);
  if (rg) {
    Tape::active()->record("reshape", [x, out] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i];
    });
  }
  return out;
}

Tensor select0(const Tensor& x, std::size_t i) {
  if (x.rank() < 1 || i >= x.dim(0)) {
    throw DimensionError("select0: index " + std::to_string(i) + " out of range for " +
                         shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  const auto xv = x.value();
  std::vector<double> y(xv.begin() + static_cast<std::ptrdiff_t>(i * row),
                        xv.begin() + static_cast<std::ptrdiff_t>((i + 1) * row));
  Shape shape(x.shape().begin() + 1, x.shape().end());
  bool rg = wants_grad({x});
  Tensor out = finish("select0", std::move(shape), std::move(y), rg);
  if (rg) {
    Tape::active()->record("select0", [x, out, i, row] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t j = 0; j < row; ++j) gx[i * row + j] += (*go)[j];
    });
  }
  return out;
}

Tensor slice0(const Tensor& x, std::size_t r0, std::size_t r1) {
  if (x.rank() < 1 || r0 > r1 || r1 > x.dim(0)) {
    throw DimensionError("slice0: rows [" + std::to_string(r0) + ", " + std::to_string(r1) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  const auto xv = x.value();
  std::vector<double> y(xv.begin() + static_cast<std::ptrdiff_t>(r0 * row),
                        xv.begin() + static_cast<std::ptrdiff_t>(r1 * row));
  Shape shape = x.shape();
  shape[0] = r1 - r0;
  bool rg = wants_grad({x});
  Tensor out = finish("slice0", std::move(shape), std::move(y), rg);
  if (rg) {
    Tape::active()->record("slice0", [x, out, r0, row] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t j = 0; j < go->size(); ++j) gx[r0 * row + j] += (*go)[j];
    });
  }
  return out;
}

Tensor slice_last(const Tensor& x, std::size_t c0, std::size_t c1) {
  const std::size_t d = x.dim(x.rank() - 1);
  if (c0 > c1 || c1 > d) {
    throw DimensionError("slice_last: columns [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const std::size_t width = c1 - c0;
  const auto xv = x.value();
  std::vector<double> y(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) y[r * width + c] = xv[r * d + c0 + c];
  }
  Shape shape = x.shape();
  shape.back() = width;
  bool rg = wants_grad({x});
  Tensor out = finish("slice_last", std::move(shape), std::move(y), rg);
  if (rg) {
    Tape::active()->record("slice_last", [x, out, c0, d, rows, width] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < width; ++c) gx[r * d + c0 + c] += (*go)[r * width + c];
      }
    });
  }
  return out;
}

Tensor stack0(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack0: empty input");
  const Shape& part_shape = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != part_shape) {
      throw DimensionError("stack0: mismatched part shapes " + shape_str(part_shape) +
                           " vs " + shape_str(p.shape()));
    }
  }
  const std::size_t row = parts[0].numel();
  std::vector<double> y;
  y.reserve(parts.size() * row);
  bool rg = false;
  for (const auto& p : parts) {
    const auto pv = p.value();
    y.insert(y.end(), pv.begin(), pv.end());
    rg = rg || p.requires_grad();
  }
  rg = rg && Tape::active() != nullptr;
  Shape shape;
  shape.push_back(parts.size());
  shape.insert(shape.end(), part_shape.begin(), part_shape.end());
  Tensor out = finish("stack0", std::move(shape), std::move(y), rg);
  if (rg) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    Tape::active()->record("stack0", [held = std::move(held), out, row] {
      const auto* go = out_grad(out);
      if (!go) return;
      for (std::size_t p = 0; p < held.size(); ++p) {
        if (!held[p].requires_grad()) continue;
        auto& gp = ensure_grad(held[p]);
        for (std::size_t j = 0; j < row; ++j) gp[j] += (*go)[p * row + j];
      }
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: empty input");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(first));
  }
  Shape out_shape = first;
  std::size_t total = first[axis];
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != first.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: shapes differ off-axis, " + shape_str(first) + " vs " +
                             shape_str(s));
      }
    }
    total += s[axis];
  }
  out_shape[axis] = total;

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<double> y(shape_numel(out_shape));
  bool rg = false;
  std::size_t off = 0;  // offset along the axis
  for (const auto& p : parts) {
    const std::size_t n = p.dim(axis);
    const auto pv = p.value();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < inner; ++i) {
          y[(o * total + off + t) * inner + i] = pv[(o * n + t) * inner + i];
        }
      }
    }
    off += n;
    rg = rg || p.requires_grad();
  }
  rg = rg && Tape::active() != nullptr;
  Tensor out = finish("concat", std::move(out_shape), std::move(y), rg);
  if (rg) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    Tape::active()->record("concat", [held = std::move(held), out, axis, outer, inner, total] {
      const auto* go = out_grad(out);
      if (!go) return;
      std::size_t off = 0;
      for (const auto& p : held) {
        const std::size_t n = p.dim(axis);
        if (p.requires_grad()) {
          auto& gp = ensure_grad(p);
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t t = 0; t < n; ++t) {
              for (std::size_t i = 0; i < inner; ++i) {
                gp[(o * n + t) * inner + i] += (*go)[(o * total + off + t) * inner + i];
              }
            }
          }
        }
        off += n;
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  if (x.rank() < 1) {
    throw DimensionError("gather_rows: expected rank >= 1, got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0);
  const std::size_t row = x.numel() / rows;
  for (std::size_t i : idx) {
    if (i >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range for " +
                           shape_str(x.shape()));
    }
  }
  const auto xv = x.value();
  std::vector<double> y(idx.size() * row);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t src = idx[r] * row;
    for (std::size_t j = 0; j < row; ++j) y[r * row + j] = xv[src + j];
  }
  Shape shape = x.shape();
  shape[0] = idx.size();
  bool rg = wants_grad({x});
  Tensor out = finish("gather_rows", std::move(shape), std::move(y), rg);
  if (rg) {
    Tape::active()->record("gather_rows", [x, out, idx, row] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t dst = idx[r] * row;
        for (std::size_t j = 0; j < row; ++j) gx[dst + j] += (*go)[r * row + j];
      }
    });
  }
  return out;
}

Tensor transpose01(const Tensor& x) {
  if (x.rank() < 2) {
    throw DimensionError("transpose01: expected rank >= 2, got " + shape_str(x.shape()));
  }
  const std::size_t a = x.dim(0), b = x.dim(1);
  const std::size_t tail = x.numel() / (a * b);
  const auto xv = x.value();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      for (std::size_t t = 0; t < tail; ++t) {
        y[(j * a + i) * tail + t] = xv[(i * b + j) * tail + t];
      }
    }
  }
  Shape shape = x.shape();
  std::swap(shape[0], shape[1]);
  bool rg = wants_grad({x});
  Tensor out = finish("transpose01", std::move(shape), std::move(y), rg);
  if (rg) {
    Tape::active()->record("transpose01", [x, out, a, b, tail] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          for (std::size_t t = 0; t < tail; ++t) {
            gx[(i * b + j) * tail + t] += (*go)[(j * a + i) * tail + t];
          }
        }
      }
    });
  }
  return out;
}

Tensor avg_pool2x2(const Tensor& x) {
  if (x.rank() != 3) {
    throw DimensionError("avg_pool2x2: expected [H×W×C], got " + shape_str(x.shape()));
  }
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ConfigError("avg_pool2x2: spatial dims must be even, got " + shape_str(x.shape()));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  const auto xv = x.value();
  std::vector<double> y(Ho * Wo * C);
  for (std::size_t h = 0; h < Ho; ++h) {
    for (std::size_t w = 0; w < Wo; ++w) {
      for (std::size_t c = 0; c < C; ++c) {
        const double acc = xv[((2 * h) * W + 2 * w) * C + c] +
                           xv[((2 * h) * W + 2 * w + 1) * C + c] +
                           xv[((2 * h + 1) * W + 2 * w) * C + c] +
                           xv[((2 * h + 1) * W + 2 * w + 1) * C + c];
        y[(h * Wo + w) * C + c] = 0.25 * acc;
      }
    }
  }
  bool rg = wants_grad({x});
  Tensor out = finish("avg_pool2x2", {Ho, Wo, C}, std::move(y), rg);
  if (rg) {
    Tape::active()->record("avg_pool2x2", [x, out, W, C, Ho, Wo] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t h = 0; h < Ho; ++h) {
        for (std::size_t w = 0; w < Wo; ++w) {
          for (std::size_t c = 0; c < C; ++c) {
            const double g = 0.25 * (*go)[(h * Wo + w) * C + c];
            gx[((2 * h) * W + 2 * w) * C + c] += g;
            gx[((2 * h) * W + 2 * w + 1) * C + c] += g;
            gx[((2 * h + 1) * W + 2 * w) * C + c] += g;
            gx[((2 * h + 1) * W + 2 * w + 1) * C + c] += g;
          }
        }
      }
    });
  }
  return out;
}

Tensor tile_spatial(const Tensor& x, std::size_t h, std::size_t w) {
  if (x.rank() != 2) {
    throw DimensionError("tile_spatial: expected [T×C], got " + shape_str(x.shape()));
  }
  const std::size_t T = x.dim(0), C = x.dim(1);
  const auto xv = x.value();
  std::vector<double> y(T * h * w * C);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < h * w; ++s) {
      for (std::size_t c = 0; c < C; ++c) {
        y[(t * h * w + s) * C + c] = xv[t * C + c];
      }
    }
  }
  bool rg = wants_grad({x});
  Tensor out = finish("tile_spatial", {T, h, w, C}, std::move(y), rg);
  if (rg) {
    Tape::active()->record("tile_spatial", [x, out, T, C, h, w] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t s = 0; s < h * w; ++s) {
          for (std::size_t c = 0; c < C; ++c) {
            gx[t * C + c] += (*go)[(t * h * w + s) * C + c];
          }
        }
      }
    });
  }
  return out;
}

Tensor temporal_diff(const Tensor& x) {
  if (x.rank() != 2) {
    throw DimensionError("temporal_diff: expected [T×D], got " + shape_str(x.shape()));
  }
  const std::size_t T = x.dim(0), D = x.dim(1);
  const auto xv = x.value();
  std::vector<double> y(T * D, 0.0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t i = 0; i < D; ++i) y[t * D + i] = xv[(t + 1) * D + i] - xv[t * D + i];
  }
  bool rg = wants_grad({x});
  Tensor out = finish("temporal_diff", {T, D}, std::move(y), rg);
  if (rg) {
    Tape::active()->record("temporal_diff", [x, out, T, D] {
      const auto* go = out_grad(out);
      if (!go) return;
      auto& gx = ensure_grad(x);
      for (std::size_t t = 0; t + 1 < T; ++t) {
        for (std::size_t i = 0; i < D; ++i) {
          gx[(t + 1) * D + i] += (*go)[t * D + i];
          gx[t * D + i] -= (*go)[t * D + i];
        }
      }
    });
  }
  return out;
}

}  // namespace stvg::ops
