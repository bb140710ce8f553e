#pragma once

#include <cstdint>
#include <vector>

#include "stvg/config.hpp"
#include "stvg/nn.hpp"
#include "stvg/tensor.hpp"
#include "stvg/tubes.hpp"

// Query-guided refinement of the decoder output into per-frame features, the
// temporal decoder that predicts segment boundaries, and the spatial box head.
namespace stvg::heads {

// Cosine similarity of every refined query against the clip-level text
// vector. v: [T×N_q×d], c: [d] -> [T×N_q], values in [-1, 1].
Tensor relevance_scores(const Tensor& v, const Tensor& c);

// Indices of the k best scores per frame, descending, ties to lower index.
std::vector<std::vector<std::size_t>> top_k_select(const Tensor& scores, std::size_t k);

// Softmax-weighted sum of the selected queries, per frame. -> [T×d]
Tensor aggregate_queries(const Tensor& v, const Tensor& scores,
                         const std::vector<std::vector<std::size_t>>& indices);

// Mean-pool the encoder memory per frame and project [f_agg ; f_global]
// from 2d back to d. proj: nn::LinearW with w [2d×d].
Tensor fuse_global_local(const Tensor& f_agg, const Tensor& mem_vision,
                         const nn::LinearW& proj);

struct TemporalDecoderLayer {
  nn::AttentionW attn;
  Tensor rel_bias;  // [2*t_max+1], indexed by clamp(i-j) + t_max
  nn::LayerNormW ln1, ln2;
  nn::FfnW ffn;
};

struct TemporalDecoder {
  std::vector<TemporalDecoderLayer> layers;
  std::size_t t_max = 32;
  std::size_t n_heads = 4;

  std::vector<NamedParam> named(const std::string& prefix) const;
};

TemporalDecoder init_temporal_decoder(const ModelConfig& cfg, Rng& rng);

// Gather indices into the relative-position table for a clip of length t;
// entry (i, j) is clamp(i - j, ±t_max) + t_max.
std::vector<std::size_t> relative_bias_indices(std::size_t t, std::size_t t_max);

// Self-attention over the T frames with the learned relative-position bias
// added to the logits, then layer norm and feed-forward, with residuals.
Tensor temporal_decode(const Tensor& f_fused, const TemporalDecoder& dec);

struct BoundaryHeads {
  nn::LinearW start, end, conf;  // d -> 1 each

  std::vector<NamedParam> named(const std::string& prefix) const;
};

BoundaryHeads init_boundary_heads(std::size_t d, Rng& rng);

struct BoundaryPrediction {
  Tensor start_dist;     // [T], sums to 1
  Tensor end_dist;       // [T], sums to 1
  Tensor temporal_conf;  // [T], in (0, 1)
  Tensor boxes;          // [T×4] cxcywh in (0, 1)
};

// Fills the three temporal fields; the box tensor is produced separately.
BoundaryPrediction predict_boundaries(const Tensor& h, const BoundaryHeads& heads);

struct BoxHead {
  nn::LinearW hidden;  // d -> hidden width
  nn::LinearW out;     // hidden -> 4

  std::vector<NamedParam> named(const std::string& prefix) const;
};

BoxHead init_box_head(std::size_t d, std::size_t hidden, Rng& rng);

// Per frame, runs the most relevant query through the box MLP; sigmoid keeps
// every coordinate inside (0, 1).
Tensor predict_boxes(const Tensor& v, const Tensor& scores, const BoxHead& head);

// Joint argmax of start_dist[s] * end_dist[e] over all s <= e; ties resolve
// to the lexicographically smallest pair. The tube keeps the boxes of the
// chosen segment.
PredictedTube extract_tube(const BoundaryPrediction& p);

}  // namespace stvg::heads
