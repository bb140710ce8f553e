#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace stvg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Deterministic random stream. Raw 64-bit draws come from std::mt19937_64
// (sequence fixed by the standard); doubles are built from the high bits
// directly so the stream is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one spare value cached.
  double normal();

  // [0, n)
  std::size_t below(std::size_t n);

  // Derives an independent stream seed (splitmix64 step).
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 gen_;
  std::optional<double> cached_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass accumulates into it
  bool requires_grad = false;
};

// Shared handle to an immutable-once-computed value buffer plus an optional
// gradient buffer. Copies alias the same storage, like the usual dynamic-graph
// tensor handle. Mutation is reserved for the optimizer and for finite
// difference probes, via mutable_value().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor from(std::vector<double> value, Shape shape);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);
  static Tensor normal(Shape shape, Rng& rng, double stddev);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t numel() const { return impl_->value.size(); }

  std::span<const double> value() const { return impl_->value; }
  std::span<double> mutable_value() const { return impl_->value; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() const { impl_->grad.clear(); }

  // numel() == 1 expected
  double item() const;

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// A parameter with its checkpoint name. `trainable` mirrors requires_grad and
// selects the "trainable/" vs "frozen/" checkpoint group.
struct NamedParam {
  std::string name;
  bool trainable = false;
  Tensor tensor;
};

}  // namespace stvg
