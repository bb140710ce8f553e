#include "stvg/tape.hpp"

#include "stvg/errors.hpp"

namespace stvg {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape::Tape() {
  if (g_active != nullptr) {
    throw ConfigError("tape: a tape is already active on this thread");
  }
  g_active = this;
}

Tape::~Tape() { g_active = nullptr; }

Tape* Tape::active() { return g_active; }

void Tape::record(const char* op, std::function<void()> backward) {
  records_.push_back({op, std::move(backward)});
}

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw DimensionError("backward: root must be a scalar, got shape " +
                         shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw ConfigError("backward: root does not require grad (was it built under this tape?)");
  }
  root.impl()->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->fn();
  }
}

}  // namespace stvg
