#pragma once

#include <cstdint>
#include <vector>

#include "stvg/backbone.hpp"
#include "stvg/config.hpp"
#include "stvg/heads.hpp"
#include "stvg/losses.hpp"
#include "stvg/tensor.hpp"

namespace stvg {

struct ModelOutput {
  heads::BoundaryPrediction prediction;            // start, end, conf, boxes
  Tensor queries;                                  // refined queries [T×N_q×d]
  Tensor scores;                                   // cosine relevance [T×N_q]
  std::vector<std::vector<std::size_t>> selected;  // language-guided indices
  std::vector<std::vector<std::size_t>> top_k;     // aggregation indices
};

// The full pipeline: frozen stub + adapters + refinement heads. Everything the
// optimizer may touch is reachable via trainable_params(); the frozen group
// never requires grad.
struct Model {
  ModelConfig cfg;
  std::uint64_t seed = 0;

  backbone::FrozenBackbone frozen;

  std::vector<adapters::AdapterParams> st;  // one per visual stage
  adapters::AdapterParams fuse_temporal, fuse_diff_pre, fuse_diff_post;
  std::vector<adapters::AdapterParams> dec_temporal;  // one per decoder layer
  adapters::AdapterParams dec_diff_post;
  adapters::LoRAParams lora;

  nn::LinearW fuse_proj;  // [2d×d]
  heads::TemporalDecoder tdec;
  heads::BoundaryHeads bheads;
  heads::BoxHead box_head;

  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  ModelOutput forward(const backbone::FrameBatch& batch) const;

  std::vector<NamedParam> named_params() const;  // frozen first, then trainable
  std::vector<NamedParam> trainable_params() const;
  std::vector<NamedParam> frozen_params() const;
  void zero_grads() const;
};

struct LossBreakdown {
  Tensor total, temporal, spatial;
};

LossBreakdown sample_loss(const ModelOutput& out, const GroundTruthTube& gt,
                          const losses::LossWeights& w, double sigma);

}  // namespace stvg
