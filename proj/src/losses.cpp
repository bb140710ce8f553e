#include "stvg/losses.hpp"

#include <cmath>

#include "stvg/errors.hpp"
#include "stvg/ops.hpp"

namespace stvg::losses {

namespace op = stvg::ops;

void LossWeights::validate() const {
  for (double v : {lambda_s, lambda_e, lambda_t, lambda_box, lambda_giou}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("loss weights must be finite and nonnegative");
    }
  }
}

namespace {

void check_distribution(const char* who, const Tensor& t) {
  if (t.rank() != 1) {
    throw ValidationError(std::string(who) + ": expected a vector, got " +
                          shape_str(t.shape()));
  }
  double acc = 0.0;
  for (double v : t.value()) {
    if (v < 0.0) throw ValidationError(std::string(who) + ": negative probability entry");
    acc += v;
  }
  if (std::abs(acc - 1.0) > 1e-6) {
    throw ValidationError(std::string(who) + ": probabilities sum to " + std::to_string(acc));
  }
}

}  // namespace

Tensor kl_div(const Tensor& target, const Tensor& pred, double eps) {
  if (target.shape() != pred.shape()) {
    throw ValidationError("kl_div: shapes differ, " + shape_str(target.shape()) + " vs " +
                          shape_str(pred.shape()));
  }
  check_distribution("kl_div target", target);
  check_distribution("kl_div pred", pred);
  Tensor log_ratio =
      op::sub(op::log(op::add_scalar(target, eps)), op::log(op::add_scalar(pred, eps)));
  return op::sum(op::mul(target, log_ratio));
}

Tensor bce_mask(const Tensor& target_mask, const Tensor& conf) {
  if (target_mask.shape() != conf.shape() || target_mask.rank() != 1) {
    throw ValidationError("bce_mask: expected matching vectors, got " +
                          shape_str(target_mask.shape()) + " and " + shape_str(conf.shape()));
  }
  for (double v : target_mask.value()) {
    if (v != 0.0 && v != 1.0) throw ValidationError("bce_mask: mask entries must be 0 or 1");
  }
  for (double v : conf.value()) {
    if (!(v > 0.0) || !(v < 1.0)) {
      throw ValidationError("bce_mask: confidence must lie strictly inside (0, 1)");
    }
  }
  Tensor ones = Tensor::full(conf.shape(), 1.0);
  Tensor pos = op::mul(target_mask, op::log(conf));
  Tensor neg_part = op::mul(op::sub(ones, target_mask), op::log(op::sub(ones, conf)));
  return op::neg(op::mean(op::add(pos, neg_part)));
}

Tensor gt_boundary_distribution(std::size_t t_star, std::size_t total_frames, double sigma) {
  if (t_star >= total_frames) {
    throw ValidationError("gt_boundary_distribution: target frame out of range");
  }
  if (!(sigma > 0.0)) {
    throw ValidationError("gt_boundary_distribution: sigma must be positive");
  }
  std::vector<double> v(total_frames);
  double z = 0.0;
  for (std::size_t i = 0; i < total_frames; ++i) {
    const double delta = static_cast<double>(i) - static_cast<double>(t_star);
    v[i] = std::exp(-delta * delta / (2.0 * sigma * sigma));
    z += v[i];
  }
  for (auto& x : v) x /= z;
  return Tensor::from(std::move(v), {total_frames});
}

Tensor segment_mask(std::size_t t_s, std::size_t t_e, std::size_t total_frames) {
  if (t_s > t_e || t_e >= total_frames) {
    throw ValidationError("segment_mask: invalid segment");
  }
  std::vector<double> v(total_frames, 0.0);
  for (std::size_t t = t_s; t <= t_e; ++t) v[t] = 1.0;
  return Tensor::from(std::move(v), {total_frames});
}

Tensor temporal_loss(const heads::BoundaryPrediction& pred, const GroundTruthTube& gt,
                     const LossWeights& w, double sigma) {
  w.validate();
  const std::size_t T = pred.start_dist.dim(0);
  gt.validate(T);
  Tensor hs = gt_boundary_distribution(gt.t_s, T, sigma);
  Tensor he = gt_boundary_distribution(gt.t_e, T, sigma);
  Tensor mask = segment_mask(gt.t_s, gt.t_e, T);
  Tensor loss = op::scale(kl_div(hs, pred.start_dist), w.lambda_s);
  loss = op::add(loss, op::scale(kl_div(he, pred.end_dist), w.lambda_e));
  return op::add(loss, op::scale(bce_mask(mask, pred.temporal_conf), w.lambda_t));
}

Tensor spatial_loss(const Tensor& pred_boxes, const GroundTruthTube& gt,
                    const LossWeights& w) {
  w.validate();
  if (pred_boxes.rank() != 2 || pred_boxes.dim(1) != 4) {
    throw ValidationError("spatial_loss: expected [T×4] boxes, got " +
                          shape_str(pred_boxes.shape()));
  }
  const std::size_t T = pred_boxes.dim(0);
  gt.validate(T);
  {
    const auto pv = pred_boxes.value();
    for (std::size_t t = gt.t_s; t <= gt.t_e; ++t) {
      if (!(pv[t * 4 + 2] > 0.0) || !(pv[t * 4 + 3] > 0.0)) {
        throw ValidationError("spatial_loss: predicted box " + std::to_string(t) +
                              " has non-positive size");
      }
    }
  }
  const std::size_t n = gt.length();
  Tensor p = op::slice0(pred_boxes, gt.t_s, gt.t_e + 1);  // [n×4]
  const Tensor& g = gt.boxes;

  auto col = [](const Tensor& m, std::size_t i) { return op::slice_last(m, i, i + 1); };
  Tensor pcx = col(p, 0), pcy = col(p, 1), pw = col(p, 2), ph = col(p, 3);
  Tensor gcx = col(g, 0), gcy = col(g, 1), gw = col(g, 2), gh = col(g, 3);

  Tensor px0 = op::sub(pcx, op::scale(pw, 0.5)), px1 = op::add(pcx, op::scale(pw, 0.5));
  Tensor py0 = op::sub(pcy, op::scale(ph, 0.5)), py1 = op::add(pcy, op::scale(ph, 0.5));
  Tensor gx0 = op::sub(gcx, op::scale(gw, 0.5)), gx1 = op::add(gcx, op::scale(gw, 0.5));
  Tensor gy0 = op::sub(gcy, op::scale(gh, 0.5)), gy1 = op::add(gcy, op::scale(gh, 0.5));

  Tensor iw = op::clamp_min(op::sub(op::minimum(px1, gx1), op::maximum(px0, gx0)), 0.0);
  Tensor ih = op::clamp_min(op::sub(op::minimum(py1, gy1), op::maximum(py0, gy0)), 0.0);
  Tensor inter = op::mul(iw, ih);
  Tensor uni = op::sub(op::add(op::mul(pw, ph), op::mul(gw, gh)), inter);
  Tensor hull = op::mul(op::sub(op::maximum(px1, gx1), op::minimum(px0, gx0)),
                        op::sub(op::maximum(py1, gy1), op::minimum(py0, gy0)));
  Tensor giou = op::sub(op::div(inter, uni), op::div(op::sub(hull, uni), hull));
  Tensor giou_penalty = op::sub(Tensor::full({n, 1}, 1.0), giou);

  Tensor sl1 = op::sum_axis(op::smooth_l1(op::sub(p, g)), 1);  // [n]
  Tensor per_frame = op::add(op::scale(sl1, w.lambda_box),
                             op::scale(op::reshape(giou_penalty, {n}), w.lambda_giou));
  return op::mean(per_frame);
}

Tensor total_loss(std::span<const std::pair<Tensor, Tensor>> per_query) {
  if (per_query.empty()) {
    throw ValidationError("total_loss: need at least one query");
  }
  Tensor acc;
  for (const auto& [lt, ls] : per_query) {
    Tensor q = op::add(lt, ls);
    acc = acc.defined() ? op::add(acc, q) : q;
  }
  return acc;
}

}  // namespace stvg::losses
