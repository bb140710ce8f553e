#include "stvg/tubes.hpp"

#include <algorithm>
#include <cmath>

#include "stvg/errors.hpp"

namespace stvg {

BoxCorners corners_from_cxcywh(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

namespace {

double area(const BoxCorners& b) { return (b.x1 - b.x0) * (b.y1 - b.y0); }

void check_positive(const BoxCorners& b) {
  if (!(b.x1 > b.x0) || !(b.y1 > b.y0)) {
    throw ValidationError("box: corners must enclose a positive area");
  }
}

}  // namespace

double box_iou(const BoxCorners& a, const BoxCorners& b) {
  check_positive(a);
  check_positive(b);
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = area(a) + area(b) - inter;
  return inter / uni;
}

double box_giou(const BoxCorners& a, const BoxCorners& b) {
  check_positive(a);
  check_positive(b);
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = area(a) + area(b) - inter;
  const double hull = (std::max(a.x1, b.x1) - std::min(a.x0, b.x0)) *
                      (std::max(a.y1, b.y1) - std::min(a.y0, b.y0));
  return inter / uni - (hull - uni) / hull;
}

void GroundTruthTube::validate(std::size_t total_frames) const {
  if (t_s > t_e || t_e >= total_frames) {
    throw ValidationError("tube: segment [" + std::to_string(t_s) + ", " + std::to_string(t_e) +
                          "] does not fit in " + std::to_string(total_frames) + " frames");
  }
  if (!boxes.defined() || boxes.rank() != 2 || boxes.dim(1) != 4 || boxes.dim(0) != length()) {
    throw ValidationError("tube: expected one box per in-segment frame");
  }
  const auto bv = boxes.value();
  for (std::size_t r = 0; r < boxes.dim(0); ++r) {
    const double w = bv[r * 4 + 2], h = bv[r * 4 + 3];
    if (!std::isfinite(w) || !std::isfinite(h) || w <= 0.0 || h <= 0.0) {
      throw ValidationError("tube: box " + std::to_string(r) + " must have positive size");
    }
  }
}

BoxCorners tube_box(const Tensor& boxes, std::size_t row) {
  const auto bv = boxes.value();
  return corners_from_cxcywh(bv[row * 4], bv[row * 4 + 1], bv[row * 4 + 2], bv[row * 4 + 3]);
}

}  // namespace stvg
