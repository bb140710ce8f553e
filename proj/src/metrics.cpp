#include "stvg/metrics.hpp"

#include <algorithm>

#include "stvg/errors.hpp"

namespace stvg::metrics {

double t_iou(Segment a, Segment b) {
  if (a.first > a.second || b.first > b.second) {
    throw ValidationError("t_iou: intervals must satisfy start <= end");
  }
  const std::size_t lo = std::max(a.first, b.first);
  const std::size_t hi = std::min(a.second, b.second);
  const std::size_t inter = hi >= lo ? hi - lo + 1 : 0;
  const std::size_t len_a = a.second - a.first + 1;
  const std::size_t len_b = b.second - b.first + 1;
  const std::size_t uni = len_a + len_b - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double v_iou(const PredictedTube& pred, const GroundTruthTube& gt) {
  if (pred.t_s > pred.t_e) {
    throw ValidationError("v_iou: predicted segment must satisfy start <= end");
  }
  const std::size_t lo = std::max(pred.t_s, gt.t_s);
  const std::size_t hi = std::min(pred.t_e, gt.t_e);
  const std::size_t inter = hi >= lo ? hi - lo + 1 : 0;
  const std::size_t uni = pred.length() + gt.length() - inter;
  double acc = 0.0;
  for (std::size_t t = lo; t <= hi && inter > 0; ++t) {
    acc += box_iou(tube_box(pred.boxes, t - pred.t_s), tube_box(gt.boxes, t - gt.t_s));
  }
  return acc / static_cast<double>(uni);
}

DatasetMetrics dataset_metrics(
    std::span<const std::pair<PredictedTube, GroundTruthTube>> pairs) {
  if (pairs.empty()) {
    throw ValidationError("dataset_metrics: empty evaluation set");
  }
  DatasetMetrics m;
  m.n_samples = pairs.size();
  for (const auto& [pred, gt] : pairs) {
    const double ti = t_iou({pred.t_s, pred.t_e}, {gt.t_s, gt.t_e});
    const double vi = v_iou(pred, gt);
    m.m_tiou += ti;
    m.m_viou += vi;
    if (vi > 0.3) m.viou_at_03 += 1.0;
    if (vi > 0.5) m.viou_at_05 += 1.0;
  }
  const double n = static_cast<double>(m.n_samples);
  m.m_tiou /= n;
  m.m_viou /= n;
  m.viou_at_03 /= n;
  m.viou_at_05 /= n;
  return m;
}

std::size_t count_trainable_params(std::span<const NamedParam> params) {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.tensor.requires_grad()) n += p.tensor.numel();
  }
  return n;
}

std::size_t count_total_params(std::span<const NamedParam> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace stvg::metrics
