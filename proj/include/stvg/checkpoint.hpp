#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "stvg/tensor.hpp"

// Checkpoint format: <prefix>.json carries the manifest (format tag, config,
// tensor table with byte offsets) and <prefix>.bin the raw little-endian f64
// payload, tensors packed back to back in manifest order. Save then load is
// bitwise exact.
namespace stvg::ckpt {

struct TensorEntry {
  std::string name;
  std::string group;  // "frozen/" or "trainable/"
  Shape shape;
  std::size_t offset = 0;  // bytes into the payload
  std::size_t numel = 0;
};

void save(const std::string& prefix, std::span<const NamedParam> params,
          const std::string& config_json);

struct LoadedCheckpoint {
  std::string config_json;
  std::vector<TensorEntry> entries;
  std::vector<double> payload;

  // Copies values into matching parameters; throws IoError naming the tensor
  // on a missing entry or a shape mismatch.
  void load_into(std::span<const NamedParam> params) const;

  std::size_t group_numel(const std::string& group) const;
};

LoadedCheckpoint load(const std::string& prefix);

}  // namespace stvg::ckpt
