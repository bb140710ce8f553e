#pragma once

#include <cstddef>

#include "stvg/tensor.hpp"

// Box geometry plus the two tube types shared by losses, metrics and heads.
// Boxes are axis-aligned, stored as normalized (cx, cy, w, h); geometry runs
// in corner form.
namespace stvg {

struct BoxCorners {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

BoxCorners corners_from_cxcywh(double cx, double cy, double w, double h);

double box_iou(const BoxCorners& a, const BoxCorners& b);

// IoU minus the hull penalty; in (-1, 1]. Throws ValidationError on a
// zero-area box.
double box_giou(const BoxCorners& a, const BoxCorners& b);

// A temporal segment [t_s, t_e] (inclusive frame indices) with one box per
// in-segment frame.
struct GroundTruthTube {
  std::size_t t_s = 0, t_e = 0;
  Tensor boxes;  // [(t_e - t_s + 1) × 4] cxcywh

  std::size_t length() const { return t_e - t_s + 1; }
  void validate(std::size_t total_frames) const;
};

struct PredictedTube {
  std::size_t t_s = 0, t_e = 0;
  Tensor boxes;  // [(t_e - t_s + 1) × 4] cxcywh

  std::size_t length() const { return t_e - t_s + 1; }
};

BoxCorners tube_box(const Tensor& boxes, std::size_t row);

}  // namespace stvg
