#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stvg/errors.hpp"
#include "stvg/losses.hpp"
#include "stvg/metrics.hpp"
#include "stvg/ops.hpp"
#include "test_util.hpp"

using namespace stvg;
namespace op = stvg::ops;
namespace ls = stvg::losses;
namespace mt = stvg::metrics;

namespace {

constexpr double kLn2 = 0.69314718055994529;

Tensor random_distribution(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  double z = 0.0;
  for (auto& x : v) {
    x = rng.uniform(0.01, 1.0);
    z += x;
  }
  for (auto& x : v) x /= z;
  return Tensor::from(std::move(v), {n});
}

GroundTruthTube make_tube(std::size_t t_s, std::size_t t_e, const std::vector<double>& boxes) {
  GroundTruthTube gt;
  gt.t_s = t_s;
  gt.t_e = t_e;
  gt.boxes = Tensor::from(boxes, {t_e - t_s + 1, 4});
  return gt;
}

PredictedTube as_pred(const GroundTruthTube& gt) {
  PredictedTube p;
  p.t_s = gt.t_s;
  p.t_e = gt.t_e;
  p.boxes = gt.boxes;
  return p;
}

GroundTruthTube random_tube(std::size_t total, Rng& rng) {
  const std::size_t t_s = rng.below(total);
  const std::size_t t_e = t_s + rng.below(total - t_s);
  std::vector<double> boxes;
  for (std::size_t t = t_s; t <= t_e; ++t) {
    const double w = rng.uniform(0.1, 0.5), h = rng.uniform(0.1, 0.5);
    boxes.push_back(rng.uniform(w / 2, 1 - w / 2));
    boxes.push_back(rng.uniform(h / 2, 1 - h / 2));
    boxes.push_back(w);
    boxes.push_back(h);
  }
  return make_tube(t_s, t_e, boxes);
}

}  // namespace

TEST_CASE("kl divergence unit values") {
  Tensor p = Tensor::from({0.25, 0.25, 0.5}, {3});
  CHECK(ls::kl_div(p, p).item() == doctest::Approx(0.0).epsilon(1e-9));

  Tensor target = Tensor::from({1.0, 0.0}, {2});
  Tensor pred = Tensor::from({0.5, 0.5}, {2});
  CHECK(ls::kl_div(target, pred).item() == doctest::Approx(kLn2).epsilon(1e-9));

  Tensor bad = Tensor::from({0.4, 0.4}, {2});
  CHECK_THROWS_AS(ls::kl_div(target, bad), ValidationError);
}

TEST_CASE("kl divergence is nonnegative on random pairs") {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng.below(9);
    Tensor a = random_distribution(n, rng);
    Tensor b = random_distribution(n, rng);
    CHECK(ls::kl_div(a, b).item() >= -1e-9);
  }
}

TEST_CASE("binary cross-entropy over the segment mask") {
  const std::size_t T = 4;
  Tensor mask = ls::segment_mask(1, 2, T);

  SUBCASE("near-perfect confidence is near-zero loss") {
    std::vector<double> conf(T);
    for (std::size_t t = 0; t < T; ++t) {
      conf[t] = mask.value()[t] == 1.0 ? 1.0 - 1e-12 : 1e-12;
    }
    Tensor c = Tensor::from(std::move(conf), {T});
    CHECK(ls::bce_mask(mask, c).item() == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("maximal uncertainty costs ln 2") {
    Tensor ones = Tensor::full({T}, 1.0);
    Tensor half = Tensor::full({T}, 0.5);
    CHECK(ls::bce_mask(ones, half).item() == doctest::Approx(kLn2).epsilon(1e-12));
  }
  SUBCASE("symmetric under complementing both arguments") {
    Rng rng(11);
    for (int rep = 0; rep < 30; ++rep) {
      Tensor c = Tensor::uniform({T}, rng, 0.05, 0.95);
      std::vector<double> flipm(T), flipc(T);
      for (std::size_t t = 0; t < T; ++t) {
        flipm[t] = 1.0 - mask.value()[t];
        flipc[t] = 1.0 - c.value()[t];
      }
      const double a = ls::bce_mask(mask, c).item();
      const double b =
          ls::bce_mask(Tensor::from(std::move(flipm), {T}), Tensor::from(std::move(flipc), {T}))
              .item();
      CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
  }
  SUBCASE("rejects confidences outside the open interval") {
    Tensor c = Tensor::from({0.5, 1.0, 0.5, 0.5}, {T});
    CHECK_THROWS_AS(ls::bce_mask(mask, c), ValidationError);
  }
}

TEST_CASE("gaussian boundary targets") {
  // sigma -> 0 collapses to one-hot
  Tensor sharp = ls::gt_boundary_distribution(3, 6, 1e-6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(sharp.value()[i] == doctest::Approx(i == 3 ? 1.0 : 0.0).epsilon(1e-12));
  }

  // interior bump is symmetric
  Tensor mid = ls::gt_boundary_distribution(2, 5, 1.0);
  CHECK(mid.value()[1] == mid.value()[3]);
  CHECK(mid.value()[0] == mid.value()[4]);

  // frozen values from independent evaluation of exp(-(i-2)^2/2)/Z, T=5
  CHECK(mid.value()[0] == doctest::Approx(0.054488684549642945).epsilon(1e-12));
  CHECK(mid.value()[1] == doctest::Approx(0.24420134200323335).epsilon(1e-12));
  CHECK(mid.value()[2] == doctest::Approx(0.40261994689424746).epsilon(1e-12));

  double acc = 0.0;
  for (double v : mid.value()) acc += v;
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("generalized IoU") {
  BoxCorners a{0, 0, 1, 1};
  CHECK(box_giou(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  BoxCorners b{1, 1, 2, 2};
  CHECK(box_giou(a, b) == doctest::Approx(-0.5).epsilon(1e-9));

  CHECK_THROWS_AS(box_giou(a, BoxCorners{0, 0, 0, 1}), ValidationError);

  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    BoxCorners p{rng.uniform(0, 0.5), rng.uniform(0, 0.5), 0, 0};
    p.x1 = p.x0 + rng.uniform(0.05, 0.5);
    p.y1 = p.y0 + rng.uniform(0.05, 0.5);
    BoxCorners q{rng.uniform(0, 0.5), rng.uniform(0, 0.5), 0, 0};
    q.x1 = q.x0 + rng.uniform(0.05, 0.5);
    q.y1 = q.y0 + rng.uniform(0.05, 0.5);
    const double giou = box_giou(p, q);
    CHECK(giou <= box_iou(p, q) + 1e-12);
    CHECK(giou > -1.0);
    CHECK(giou <= 1.0);
  }
}

TEST_CASE("temporal loss composition") {
  const std::size_t T = 4;
  auto gt = make_tube(1, 2, {0.5, 0.5, 0.2, 0.2, 0.5, 0.5, 0.2, 0.2});
  ls::LossWeights w;

  SUBCASE("perfect predictions are near zero") {
    heads::BoundaryPrediction p;
    p.start_dist = ls::gt_boundary_distribution(1, T, 1.0);
    p.end_dist = ls::gt_boundary_distribution(2, T, 1.0);
    std::vector<double> conf(T);
    Tensor mask = ls::segment_mask(1, 2, T);
    for (std::size_t t = 0; t < T; ++t) {
      conf[t] = mask.value()[t] == 1.0 ? 1.0 - 1e-12 : 1e-12;
    }
    p.temporal_conf = Tensor::from(std::move(conf), {T});
    CHECK(ls::temporal_loss(p, gt, w).item() < 1e-6);
  }

  SUBCASE("zero weights collapse the loss") {
    heads::BoundaryPrediction p;
    p.start_dist = Tensor::full({T}, 0.25);
    p.end_dist = Tensor::full({T}, 0.25);
    p.temporal_conf = Tensor::full({T}, 0.5);
    ls::LossWeights zero{0, 0, 0, 0, 0};
    CHECK(ls::temporal_loss(p, gt, zero).item() == 0.0);
  }

  SUBCASE("uniform predictions equal the sum of component oracles") {
    heads::BoundaryPrediction p;
    p.start_dist = Tensor::full({T}, 0.25);
    p.end_dist = Tensor::full({T}, 0.25);
    p.temporal_conf = Tensor::full({T}, 0.5);
    const double expected = ls::kl_div(ls::gt_boundary_distribution(1, T), p.start_dist).item() +
                            ls::kl_div(ls::gt_boundary_distribution(2, T), p.end_dist).item() +
                            ls::bce_mask(ls::segment_mask(1, 2, T), p.temporal_conf).item();
    CHECK(ls::temporal_loss(p, gt, w).item() == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("spatial loss") {
  const std::size_t T = 5;
  ls::LossWeights w;

  SUBCASE("perfect boxes cost nothing") {
    Rng rng(17);
    auto gt = random_tube(T, rng);
    std::vector<double> pred(T * 4, 0.3);
    const auto gv = gt.boxes.value();
    for (std::size_t t = gt.t_s; t <= gt.t_e; ++t) {
      for (std::size_t i = 0; i < 4; ++i) pred[t * 4 + i] = gv[(t - gt.t_s) * 4 + i];
    }
    Tensor pb = Tensor::from(std::move(pred), {T, 4});
    CHECK(std::abs(ls::spatial_loss(pb, gt, w).item()) < 1e-9);
  }

  SUBCASE("frames outside the segment are ignored bitwise") {
    Rng rng(19);
    auto gt = make_tube(1, 2, {0.5, 0.5, 0.4, 0.4, 0.5, 0.5, 0.4, 0.4});
    Tensor pb = Tensor::uniform({T, 4}, rng, 0.3, 0.7);
    const double base = ls::spatial_loss(pb, gt, w).item();
    auto mutated = std::vector<double>(pb.value().begin(), pb.value().end());
    mutated[0] = 0.123;
    mutated[3 * 4 + 2] = 0.9;
    mutated[4 * 4 + 1] = 0.01;
    Tensor pb2 = Tensor::from(std::move(mutated), {T, 4});
    const double after = ls::spatial_loss(pb2, gt, w).item();
    CHECK(std::memcmp(&base, &after, sizeof(double)) == 0);
  }

  SUBCASE("single-frame segment matches the hand computation") {
    auto gt = make_tube(2, 2, {0.6, 0.5, 0.4, 0.4});
    std::vector<double> pred(T * 4, 0.5);
    pred[2 * 4 + 0] = 0.5;
    pred[2 * 4 + 1] = 0.5;
    pred[2 * 4 + 2] = 0.4;
    pred[2 * 4 + 3] = 0.4;
    Tensor pb = Tensor::from(std::move(pred), {T, 4});
    // smoothL1: only cx differs by 0.1 -> 0.5 * 0.01 = 0.005
    // giou: boxes [0.3,0.3,0.7,0.7] vs [0.4,0.3,0.8,0.7]: iou 0.6, hull = union -> giou 0.6
    const double expected = w.lambda_box * 0.005 + w.lambda_giou * (1.0 - 0.6);
    CHECK(ls::spatial_loss(pb, gt, w).item() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("total loss is additive over queries") {
  Tensor lt = Tensor::scalar(0.75);
  Tensor lsp = Tensor::scalar(1.25);
  std::vector<std::pair<Tensor, Tensor>> one{{lt, lsp}};
  CHECK(ls::total_loss(one).item() == 2.0);

  std::vector<std::pair<Tensor, Tensor>> two{{lt, lsp}, {lt, lsp}};
  CHECK(ls::total_loss(two).item() == 4.0);

  std::vector<std::pair<Tensor, Tensor>> none;
  CHECK_THROWS_AS(ls::total_loss(none), ValidationError);
}

TEST_CASE("temporal IoU") {
  CHECK(mt::t_iou({2, 6}, {2, 6}) == 1.0);
  CHECK(mt::t_iou({0, 1}, {3, 5}) == 0.0);
  CHECK(mt::t_iou({2, 6}, {4, 8}) == doctest::Approx(0.42857142857142855).epsilon(1e-15));
  CHECK_THROWS_AS(mt::t_iou({4, 2}, {0, 1}), ValidationError);

  Rng rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t T = 10;
    const std::size_t s1 = rng.below(T), e1 = s1 + rng.below(T - s1);
    const std::size_t s2 = rng.below(T), e2 = s2 + rng.below(T - s2);
    const double got = mt::t_iou({s1, e1}, {s2, e2});
    // frame-set enumeration oracle
    std::size_t inter = 0, uni = 0;
    for (std::size_t t = 0; t < 2 * T; ++t) {
      const bool in1 = t >= s1 && t <= e1, in2 = t >= s2 && t <= e2;
      inter += (in1 && in2) ? 1 : 0;
      uni += (in1 || in2) ? 1 : 0;
    }
    CHECK(got == static_cast<double>(inter) / static_cast<double>(uni));
    CHECK(got == mt::t_iou({s2, e2}, {s1, e1}));
    // shifting both intervals leaves the value unchanged
    CHECK(got == mt::t_iou({s1 + 3, e1 + 3}, {s2 + 3, e2 + 3}));
  }
}

TEST_CASE("video IoU") {
  Rng rng(29);

  SUBCASE("identical tubes score 1") {
    auto gt = random_tube(8, rng);
    CHECK(mt::v_iou(as_pred(gt), gt) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("disjoint segments score 0") {
    auto gt = make_tube(0, 1, {0.5, 0.5, 0.2, 0.2, 0.5, 0.5, 0.2, 0.2});
    auto far = make_tube(4, 5, {0.5, 0.5, 0.2, 0.2, 0.5, 0.5, 0.2, 0.2});
    CHECK(mt::v_iou(as_pred(far), gt) == 0.0);
  }

  SUBCASE("worked overlap case") {
    // gt on {0..3}, pred on {2..5}, identical boxes on the overlap
    std::vector<double> box{0.5, 0.5, 0.3, 0.3};
    std::vector<double> four, gt_boxes;
    for (int i = 0; i < 4; ++i) {
      four.insert(four.end(), box.begin(), box.end());
      gt_boxes.insert(gt_boxes.end(), box.begin(), box.end());
    }
    auto gt = make_tube(0, 3, gt_boxes);
    PredictedTube pred;
    pred.t_s = 2;
    pred.t_e = 5;
    pred.boxes = Tensor::from(four, {4, 4});
    CHECK(mt::v_iou(pred, gt) == doctest::Approx(0.33333333333333331).epsilon(1e-12));
  }

  SUBCASE("matches the frame-set enumeration oracle exactly") {
    for (int rep = 0; rep < 100; ++rep) {
      auto gt = random_tube(8, rng);
      auto pr = random_tube(8, rng);
      PredictedTube pred = as_pred(pr);
      const double got = mt::v_iou(pred, gt);

      double acc = 0.0;
      std::size_t uni = 0;
      for (std::size_t t = 0; t < 8; ++t) {
        const bool in_p = t >= pred.t_s && t <= pred.t_e;
        const bool in_g = t >= gt.t_s && t <= gt.t_e;
        if (in_p || in_g) ++uni;
        if (in_p && in_g) {
          const auto pv = pred.boxes.value();
          const auto gv = gt.boxes.value();
          const std::size_t pr_row = t - pred.t_s, gt_row = t - gt.t_s;
          auto corner = [](const double* b) {
            return BoxCorners{b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2,
                              b[1] + b[3] / 2};
          };
          BoxCorners a = corner(&pv[pr_row * 4]);
          BoxCorners b = corner(&gv[gt_row * 4]);
          const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
          const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
          const double inter = iw * ih;
          acc += inter / ((a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter);
        }
      }
      const double oracle = acc / static_cast<double>(uni);
      CHECK(got == oracle);
    }
  }
}

TEST_CASE("dataset metrics") {
  Rng rng(31);
  std::vector<std::pair<PredictedTube, GroundTruthTube>> pairs;
  for (int i = 0; i < 5; ++i) {
    auto gt = random_tube(8, rng);
    pairs.push_back({as_pred(gt), gt});
  }
  auto perfect = mt::dataset_metrics(pairs);
  CHECK(perfect.m_tiou == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.m_viou == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.viou_at_03 == 1.0);
  CHECK(perfect.viou_at_05 == 1.0);

  // two samples with vIoU 0.4 and 0.6: thresholds are strict
  auto gt_a = make_tube(0, 4, std::vector<double>(5 * 4, 0.4));
  {
    auto bv = gt_a.boxes.mutable_value();
    for (std::size_t t = 0; t < 5; ++t) {
      bv[t * 4 + 0] = 0.5;
      bv[t * 4 + 1] = 0.5;
      bv[t * 4 + 2] = 0.4;
      bv[t * 4 + 3] = 0.4;
    }
  }
  // pred covering 2 of 5 frames with perfect boxes: vIoU = 2/5 = 0.4
  PredictedTube p_a;
  p_a.t_s = 0;
  p_a.t_e = 1;
  p_a.boxes = ops::slice0(gt_a.boxes, 0, 2);
  // pred covering 3 of 5 frames: vIoU = 0.6
  PredictedTube p_b;
  p_b.t_s = 0;
  p_b.t_e = 2;
  p_b.boxes = ops::slice0(gt_a.boxes, 0, 3);
  std::vector<std::pair<PredictedTube, GroundTruthTube>> two{{p_a, gt_a}, {p_b, gt_a}};
  auto m = mt::dataset_metrics(two);
  CHECK(m.m_viou == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.viou_at_03 == 1.0);
  CHECK(m.viou_at_05 == 0.5);

  // order invariance
  std::vector<std::pair<PredictedTube, GroundTruthTube>> swapped{{p_b, gt_a}, {p_a, gt_a}};
  auto m2 = mt::dataset_metrics(swapped);
  CHECK(m.m_tiou == m2.m_tiou);
  CHECK(m.m_viou == m2.m_viou);

  std::vector<std::pair<PredictedTube, GroundTruthTube>> none;
  CHECK_THROWS_AS(mt::dataset_metrics(none), ValidationError);
}

TEST_CASE("parameter counting") {
  std::vector<NamedParam> frozen;
  Rng rng(37);
  Tensor w = Tensor::uniform({8, 8}, rng, -1, 1);
  frozen.push_back({"w", false, w});
  CHECK(mt::count_trainable_params(frozen) == 0);
  CHECK(mt::count_total_params(frozen) == 64);

  Tensor tw = Tensor::uniform({8, 8}, rng, -1, 1);
  tw.set_requires_grad(true);
  Tensor tb = Tensor::zeros({8});
  tb.set_requires_grad(true);
  std::vector<NamedParam> mixed{{"w", false, w}, {"tw", true, tw}, {"tb", true, tb}};
  CHECK(mt::count_trainable_params(mixed) == 72);
  CHECK(mt::count_total_params(mixed) == 136);
}
