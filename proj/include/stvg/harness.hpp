#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stvg/data.hpp"
#include "stvg/losses.hpp"
#include "stvg/metrics.hpp"
#include "stvg/model.hpp"

// Deterministic training loop (adaptive-moment gradient descent over the
// trainable group only), evaluation, and the JSON config shared by the CLI.
namespace stvg::harness {

struct TrainConfig {
  std::uint64_t seed = 42;
  ModelConfig model;
  data::DatasetSpec dataset;
  losses::LossWeights weights;
  double sigma = 1.0;  // boundary target sharpness, in frames
  double lr = 3e-3;
  double lr_final = 1.5e-4;  // cosine decay target over the run
  double clip_norm = 5.0;    // global gradient norm cap; 0 disables
  std::size_t steps = 1500;
  std::size_t batch_size = 4;
  std::size_t n_train = 64;
  std::size_t n_val = 16;
  std::size_t log_every = 50;

  void validate() const;
};

// Single flat JSON document; unknown keys are rejected, missing keys take the
// defaults above.
TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::string& path);

// Adaptive-moment gradient descent, beta1 0.9, beta2 0.999, eps 1e-8.
class Adam {
 public:
  Adam(std::vector<NamedParam> params, double lr);
  void step();
  void set_lr(double lr) { lr_ = lr; }

 private:
  struct Slot {
    NamedParam param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double lr_;
  std::size_t t_ = 0;
};

struct StepLog {
  std::size_t step = 0;
  double total = 0, temporal = 0, spatial = 0;
  std::optional<metrics::DatasetMetrics> val;
};

struct TrainResult {
  Model model;
  std::vector<StepLog> history;
  double initial_loss = 0, final_loss = 0;
};

TrainResult train(const TrainConfig& cfg, std::span<const data::SyntheticSample> train_set,
                  std::span<const data::SyntheticSample> val_set, std::ostream* log = nullptr);

struct EvalReport {
  metrics::DatasetMetrics metrics;
  std::size_t tp_trainable = 0;
  std::size_t tp_total = 0;
};

EvalReport evaluate(const Model& model, std::span<const data::SyntheticSample> samples);
std::string report_to_json(const EvalReport& r);
void write_report(const std::string& path, const EvalReport& r);

// Inference for one sample.
PredictedTube predict_tube(const Model& model, const data::SyntheticSample& s);

}  // namespace stvg::harness
