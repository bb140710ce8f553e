#pragma once

#include <span>
#include <utility>

#include "stvg/heads.hpp"
#include "stvg/tensor.hpp"
#include "stvg/tubes.hpp"

// Training objectives: KL divergence against Gaussian boundary targets plus a
// binary cross-entropy over the in-segment mask for the temporal side, and
// smooth-L1 plus a GIoU penalty over the in-segment frames for the spatial
// side. Everything returns a scalar tensor wired into the graph.
namespace stvg::losses {

struct LossWeights {
  double lambda_s = 1.0;
  double lambda_e = 1.0;
  double lambda_t = 1.0;
  double lambda_box = 5.0;
  double lambda_giou = 2.0;

  void validate() const;
};

// sum_i target_i * ln((target_i + eps) / (pred_i + eps)); both arguments must
// be probability vectors (nonnegative, summing to 1 within 1e-6).
Tensor kl_div(const Tensor& target, const Tensor& pred, double eps = 1e-12);

// Mean binary cross-entropy of per-frame confidences against the {0,1}
// segment mask; confidences must lie strictly inside (0, 1).
Tensor bce_mask(const Tensor& target_mask, const Tensor& conf);

// Discrete Gaussian bump centered on the target frame, renormalized to sum 1.
Tensor gt_boundary_distribution(std::size_t t_star, std::size_t total_frames,
                                double sigma = 1.0);

// 1 inside [t_s, t_e], 0 outside.
Tensor segment_mask(std::size_t t_s, std::size_t t_e, std::size_t total_frames);

Tensor temporal_loss(const heads::BoundaryPrediction& pred, const GroundTruthTube& gt,
                     const LossWeights& w, double sigma = 1.0);

// Mean over the in-segment frames of lambda_box * smoothL1 + lambda_giou *
// (1 - GIoU); frames outside the segment contribute nothing.
Tensor spatial_loss(const Tensor& pred_boxes, const GroundTruthTube& gt,
                    const LossWeights& w);

// Sum over text queries of (temporal + spatial).
Tensor total_loss(std::span<const std::pair<Tensor, Tensor>> per_query);

}  // namespace stvg::losses
