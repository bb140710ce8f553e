#include "stvg/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "stvg/errors.hpp"

namespace stvg {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

double Rng::normal() {
  if (cached_) {
    double v = *cached_;
    cached_.reset();
    return v;
  }
  // u1 in (0, 1]
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(a);
  return r * std::cos(a);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) return 0;
  auto v = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return v >= n ? n - 1 : v;
}

std::uint64_t Rng::mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  auto impl = std::make_shared<TensorImpl>();
  impl->value.assign(shape_numel(shape), v);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v) { return full(Shape{}, v); }

Tensor Tensor::from(std::vector<double> value, Shape shape) {
  if (value.size() != shape_numel(shape)) {
    throw DimensionError("tensor: data length " + std::to_string(value.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->value = std::move(value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from(std::move(v), std::move(shape));
}

Tensor Tensor::normal(Shape shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return from(std::move(v), std::move(shape));
}

double Tensor::item() const {
  if (!impl_ || impl_->value.size() != 1) {
    throw DimensionError("item: tensor is not a scalar, shape " +
                         (impl_ ? shape_str(impl_->shape) : std::string("<undefined>")));
  }
  return impl_->value[0];
}

}  // namespace stvg
