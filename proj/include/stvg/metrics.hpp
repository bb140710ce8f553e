#pragma once

#include <span>
#include <utility>

#include "stvg/tensor.hpp"
#include "stvg/tubes.hpp"

// Evaluation: temporal IoU over inclusive frame intervals, video IoU over the
// union of segments, dataset-level summaries, and parameter accounting.
namespace stvg::metrics {

using Segment = std::pair<std::size_t, std::size_t>;  // [first, last] frames

double t_iou(Segment a, Segment b);

// Mean per-frame box IoU over the intersection frames, divided by the size of
// the union of the two segments.
double v_iou(const PredictedTube& pred, const GroundTruthTube& gt);

struct DatasetMetrics {
  double m_tiou = 0.0;
  double m_viou = 0.0;
  double viou_at_03 = 0.0;  // fraction with vIoU strictly above 0.3
  double viou_at_05 = 0.0;
  std::size_t n_samples = 0;
};

DatasetMetrics dataset_metrics(
    std::span<const std::pair<PredictedTube, GroundTruthTube>> pairs);

std::size_t count_trainable_params(std::span<const NamedParam> params);
std::size_t count_total_params(std::span<const NamedParam> params);

}  // namespace stvg::metrics
