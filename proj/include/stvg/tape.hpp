#pragma once

#include <functional>
#include <vector>

#include "stvg/tensor.hpp"

namespace stvg {

// Ordered record of the primitive operations executed while the tape is the
// active one for this thread. backward() replays the records in exact reverse
// execution order and only ever touches tensors captured by those records.
//
// One tape may be active per thread at a time. Tapes on different threads are
// independent; finished tensors may be read concurrently.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::function<void()> backward);

  // root must be a scalar built under this tape with requires_grad set.
  void backward(const Tensor& root);

  std::size_t size() const { return records_.size(); }

  static Tape* active();

 private:
  struct Record {
    const char* op;
    std::function<void()> fn;
  };
  std::vector<Record> records_;
};

}  // namespace stvg
