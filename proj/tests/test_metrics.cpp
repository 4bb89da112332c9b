#include <cmath>

#include "doctest.h"

#include "bas/metrics.hpp"
#include "bas/model.hpp"
#include "bas/rng.hpp"
#include "bas/threshold_search.hpp"
#include "oracles.hpp"

using namespace bas;

namespace {

Map2D random_map(Rng& rng, int h, int w) {
  Map2D m(h, w);
  for (auto& v : m.v) v = float(rng.uniform(0, 1));
  return m;
}

BinaryMask random_mask(Rng& rng, int h, int w, double p = 0.35) {
  BinaryMask m(h, w);
  for (auto& v : m.v) v = rng.uniform() < p ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("binarize edge thresholds") {
  Map2D m(2, 2);
  m.v = {0.2f, 0.4f, 0.6f, 0.9f};
  CHECK(binarize(m, 0.0).area() == 4);   // everything clears a zero threshold
  CHECK(binarize(m, 0.95).area() == 0);  // above the max nothing does
  BinaryMask half = binarize(m, 0.5);
  CHECK(half.v == std::vector<uint8_t>{0, 0, 1, 1});
}

TEST_CASE("mask_to_bbox: trivial cases and the component rule") {
  BinaryMask full(4, 4);
  std::fill(full.v.begin(), full.v.end(), 1);
  CHECK(*mask_to_bbox(full) == Box{0, 0, 4, 4});

  BinaryMask single(8, 8);
  single.at(4, 3) = 1;  // pixel (x=3, y=4)
  CHECK(*mask_to_bbox(single) == Box{3, 4, 4, 5});

  CHECK(!mask_to_bbox(BinaryMask(3, 3)).has_value());

  // Two components, sizes 5 and 9: the larger one wins.
  BinaryMask two(8, 8);
  for (int i = 0; i < 5; ++i) two.at(0, i) = 1;            // 1x5 strip
  for (int y = 5; y < 8; ++y)
    for (int x = 5; x < 8; ++x) two.at(y, x) = 1;          // 3x3 block
  CHECK(*mask_to_bbox(two) == Box{5, 5, 8, 8});
  CHECK(*mask_to_bbox(two) == *oracle::bbox_largest_component(two));
}

TEST_CASE("box and mask IoU examples") {
  CHECK(iou_box(Box{1, 2, 5, 6}, Box{1, 2, 5, 6}) == 1.0);
  CHECK(iou_box(Box{0, 0, 2, 2}, Box{4, 4, 6, 6}) == 0.0);
  CHECK(iou_box(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
  CHECK(iou_box(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}) ==
        oracle::iou_box_pixels(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}));

  BinaryMask a(4, 4), b(4, 4);
  for (int i = 0; i < 4; ++i) a.v[size_t(i)] = 1;
  CHECK(iou_mask(a, a) == 1.0);
  CHECK(iou_mask(a, b) == 0.0);
  b = a;
  b.v[0] = 0;
  CHECK(iou_mask(a, b) == doctest::Approx(0.75));
}

TEST_CASE("loc accuracies: boundary IoU counts, rank gating") {
  // One sample whose predicted box hits the ground truth at IoU exactly 0.5:
  // pred (0,0,1,2) vs gt (0,0,2,2) -> inter 2, union 4.
  Map2D fused(4, 4);
  fused.at(0, 0) = 1.f;
  fused.at(1, 0) = 1.f;
  std::vector<LocSample> samples;
  samples.push_back({{1.f, 0.f, 0.f}, fused, 0, Box{0, 0, 2, 2}});
  LocAccuracies acc = loc_accuracies(samples, 0.5, 0.5, /*strict=*/false);
  CHECK(acc.gt_known == 1.0);
  CHECK(acc.top1 == 1.0);
  LocAccuracies strict = loc_accuracies(samples, 0.5, 0.5, /*strict=*/true);
  CHECK(strict.gt_known == 0.0);

  // Wrong top prediction keeps gt-known but zeroes the ranked metrics when
  // the true class falls outside the window.
  std::vector<LocSample> worst;
  std::vector<float> logits = {0.f, 1.f, 2.f, 3.f, 4.f, 5.f, 6.f};
  worst.push_back({logits, fused, 0, Box{0, 0, 2, 2}});
  LocAccuracies w = loc_accuracies(worst, 0.5, 0.5, false);
  CHECK(w.gt_known == 1.0);
  CHECK(w.top1 == 0.0);
  CHECK(w.top5 == 0.0);

  CHECK_THROWS_AS(loc_accuracies({}, 0.5), std::invalid_argument);
}

TEST_CASE("maxboxaccv2 on a constructed 0.6-IoU instance") {
  // Binary rectangle whose component box has IoU 0.6 with the ground truth at
  // every positive threshold; theta=0 floods the frame (IoU 20/64).
  Map2D m(8, 8);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) m.at(y, x) = 1.f;
  Box gt{0, 0, 5, 4};
  double v = maxboxaccv2({m}, {gt});
  CHECK(v == doctest::Approx(2.0 / 3.0));
  CHECK(v == oracle::maxboxacc_sweep({m}, {gt}, {0.3, 0.5, 0.7}));

  Map2D empty(8, 8);
  CHECK(maxboxaccv2({empty}, {gt}) == doctest::Approx(1.0 / 3.0));  // theta 0 floods
}

TEST_CASE("piou: perfect maps, constant maps, zero maps") {
  Rng rng(3);
  BinaryMask gt = random_mask(rng, 8, 8);
  Map2D perfect(8, 8);
  for (size_t i = 0; i < gt.v.size(); ++i) perfect.v[i] = float(gt.v[i]);
  CHECK(piou({perfect}, {gt}) == 1.0);

  BinaryMask half(8, 8);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) half.at(y, x) = 1;
  Map2D flat(8, 8);
  std::fill(flat.v.begin(), flat.v.end(), 0.5f);
  CHECK(piou({flat}, {half}) == doctest::Approx(0.5));

  Map2D zero(8, 8);
  CHECK(piou({zero}, {half}) == doctest::Approx(0.5));  // theta 0 keeps all ones
  std::vector<double> curve;
  piou({zero}, {half}, &curve);
  REQUIRE(curve.size() == 256);
  CHECK(curve[255] == 0.0);  // above every value nothing survives... except theta=1
}

TEST_CASE("pxap: analytic constant case, separable case, inverted case") {
  Rng rng(4);
  BinaryMask gt = random_mask(rng, 8, 8, 0.4);
  double rate = double(gt.area()) / double(gt.v.size());

  // Constant prediction: a single PR point at recall 1, precision = rate.
  Map2D flat(8, 8);
  std::fill(flat.v.begin(), flat.v.end(), 0.7f);
  CHECK(pxap({flat}, {gt}) == doctest::Approx(rate));

  // Perfect separation.
  Map2D sep(8, 8);
  for (size_t i = 0; i < gt.v.size(); ++i) sep.v[i] = gt.v[i] ? 0.9f : 0.1f;
  CHECK(pxap({sep}, {gt}) == doctest::Approx(1.0));

  // Graded inverted prediction (every negative outranks every positive,
  // all values distinct) scores below the positive rate: each partial-recall
  // precision k/(neg+k) sits under the full-recall one.
  Map2D inv(8, 8);
  for (size_t i = 0; i < gt.v.size(); ++i)
    inv.v[i] = (gt.v[i] ? 0.1f : 0.6f) + 0.002f * float(i);
  double ap_inv = pxap({inv}, {gt});
  CHECK(ap_inv < rate);
  CHECK(ap_inv == oracle::pxap_bruteforce({inv}, {gt}));
}

TEST_CASE("seed labeling and mIoU on a hand-built 4x4 two-class case") {
  // Class 0 occupies the left half, class 1 the top-right corner.
  Map2D c0(4, 4), c1(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x) c0.at(y, x) = 0.8f;
  c1.at(0, 3) = 0.9f;
  c1.at(1, 3) = 0.9f;
  auto pred = label_map({c0, c1}, 0.5);
  std::vector<uint8_t> gt = {
      1, 1, 0, 2,
      1, 1, 0, 2,
      1, 1, 0, 0,
      1, 0, 0, 0,
  };
  double v = miou({pred}, {gt}, 2);
  CHECK(v == oracle::miou_confusion({pred}, {gt}, 2));
  // pred: class1 fills the left half (8 px), class2 two corner px, rest bg.
  // Hand confusion: bg 6/7, c1 7/8, c2 2/2.
  CHECK(v == doctest::Approx((6.0 / 7.0 + 7.0 / 8.0 + 1.0) / 3.0));

  // One-hot maps equal to the ground truth give exactly 1.
  Map2D h0(4, 4), h1(4, 4);
  for (size_t i = 0; i < gt.size(); ++i) {
    h0.v[i] = gt[i] == 1 ? 1.f : 0.f;
    h1.v[i] = gt[i] == 2 ? 1.f : 0.f;
  }
  CHECK(miou({label_map({h0, h1}, 0.5)}, {gt}, 2) == 1.0);

  // Everything below the cutoff on an all-background ground truth.
  Map2D low0(4, 4), low1(4, 4);
  std::fill(low0.v.begin(), low0.v.end(), 0.2f);
  std::vector<uint8_t> bg(16, 0);
  CHECK(miou({label_map({low0, low1}, 0.5)}, {bg}, 2) == 1.0);
}

TEST_CASE("metrics match the brute-force references exactly on random 8x8 instances") {
  Rng rng(5);
  const int trials = 12;
  for (int t = 0; t < trials; ++t) {
    const int n = 3 + int(rng.uniform_int(0, 2));
    std::vector<Map2D> maps;
    std::vector<BinaryMask> masks;
    std::vector<Box> boxes;
    for (int i = 0; i < n; ++i) {
      maps.push_back(random_map(rng, 8, 8));
      BinaryMask m = random_mask(rng, 8, 8);
      if (m.area() == 0) m.at(0, 0) = 1;
      masks.push_back(m);
      int x0 = rng.uniform_int(0, 5), y0 = rng.uniform_int(0, 5);
      boxes.push_back(Box{x0, y0, x0 + 1 + rng.uniform_int(0, 2), y0 + 1 + rng.uniform_int(0, 2)});
    }
    CHECK(piou(maps, masks) == oracle::piou_sweep(maps, masks));
    CHECK(pxap(maps, masks) == oracle::pxap_bruteforce(maps, masks));
    CHECK(maxboxaccv2(maps, boxes) == oracle::maxboxacc_sweep(maps, boxes, {0.3, 0.5, 0.7}));
  }
}

TEST_CASE("metric bounds and monotonicity properties") {
  Rng rng(6);
  std::vector<Map2D> maps;
  std::vector<BinaryMask> masks;
  std::vector<Box> boxes;
  for (int i = 0; i < 6; ++i) {
    maps.push_back(random_map(rng, 8, 8));
    BinaryMask m = random_mask(rng, 8, 8);
    if (m.area() == 0) m.at(1, 1) = 1;
    masks.push_back(m);
    boxes.push_back(Box{1, 1, 5, 6});
  }
  double p = piou(maps, masks);
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  // The peak dominates the curve at any fixed threshold.
  std::vector<double> curve;
  piou(maps, masks, &curve);
  for (double v : curve) CHECK(v <= p + 1e-15);

  // Best accuracy is monotone non-increasing in delta.
  double loose = maxboxaccv2(maps, boxes, {0.3});
  double mid = maxboxaccv2(maps, boxes, {0.5});
  double tight = maxboxaccv2(maps, boxes, {0.7});
  CHECK(loose >= mid);
  CHECK(mid >= tight);
  double mean3 = maxboxaccv2(maps, boxes);
  CHECK(mean3 >= tight);
  CHECK(mean3 <= loose);

  // Permutation invariance over samples.
  std::vector<Map2D> maps_r(maps.rbegin(), maps.rend());
  std::vector<BinaryMask> masks_r(masks.rbegin(), masks.rend());
  CHECK(piou(maps_r, masks_r) == p);
  CHECK(pxap(maps_r, masks_r) == pxap(maps, masks));
}

TEST_CASE("bilinear upsample keeps constants and the value range") {
  Map2D flat(4, 4);
  std::fill(flat.v.begin(), flat.v.end(), 0.3f);
  Map2D up = upsample_bilinear(flat, 16, 16);
  for (float v : up.v) CHECK(v == doctest::Approx(0.3).epsilon(1e-6));

  Rng rng(7);
  Map2D m = random_map(rng, 4, 4);
  Map2D u = upsample_bilinear(m, 17, 9);
  CHECK(u.h == 17);
  CHECK(u.w == 9);
  float lo = 1.f, hi = 0.f;
  for (float v : m.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (float v : u.v) {
    CHECK(v >= lo - 1e-6f);
    CHECK(v <= hi + 1e-6f);
  }
}

TEST_CASE("combine_foreground follows the per-pixel rule") {
  Map2D spec(2, 2), agn(2, 2);
  spec.v = {0.9f, 0.2f, 0.5f, 0.7f};
  agn.v = {0.4f, 0.6f, 0.5f, 0.3f};

  Map2D rep = combine_foreground(spec, agn, CombineStrategy::kReplace);
  CHECK(rep.v == std::vector<float>{0.4f, 0.2f, 0.5f, 0.3f});

  Map2D avg = combine_foreground(spec, agn, CombineStrategy::kAverage);
  CHECK(avg.v[0] == doctest::Approx(0.65));
  CHECK(avg.v[1] == 0.2f);  // specific <= agnostic stays untouched
  CHECK(avg.v[2] == 0.5f);
  CHECK(avg.v[3] == doctest::Approx(0.5));

  // Specific below agnostic everywhere: unchanged.
  Map2D low(2, 2);
  low.v = {0.1f, 0.1f, 0.1f, 0.1f};
  CHECK(combine_foreground(low, agn, CombineStrategy::kAverage).v == low.v);

  // Elementwise oracle on random data.
  Rng rng(8);
  Map2D s = random_map(rng, 5, 5), a = random_map(rng, 5, 5);
  Map2D out = combine_foreground(s, a, CombineStrategy::kAverage);
  for (size_t i = 0; i < out.v.size(); ++i) {
    float expect = s.v[i] > a.v[i] ? float((double(s.v[i]) + double(a.v[i])) / 2.0) : s.v[i];
    CHECK(out.v[i] == expect);
  }
}

TEST_CASE("image-specific threshold search picks the score argmin") {
  ModelConfig cfg;
  cfg.num_classes = 3;
  cfg.input_size = 16;
  cfg.blocks = {{4, 2}, {6, 1}, {6, 1}};
  cfg.generator_stage = 2;
  BasNet net = init_net(cfg, 99);
  Rng rng(9);
  TensorF img({3, 16, 16});
  for (auto& v : img.data) v = float(rng.uniform(0, 1));
  const int fs = cfg.feature_size();

  // Single-element grid returns that grid point.
  Map2D map(fs, fs);
  for (auto& v : map.v) v = float(rng.uniform(0, 1));
  ThresholdPick one = image_specific_threshold(net, img, 0, map, {0.4});
  CHECK(one.theta == 0.4);

  // Binary map: every positive threshold reproduces its support, and the tie
  // rule keeps the lowest such theta.
  Map2D binary(fs, fs);
  for (size_t i = 0; i < binary.v.size(); ++i) binary.v[i] = rng.uniform() < 0.4 ? 1.f : 0.f;
  auto grid = threshold_grid_256();
  ThresholdPick pick = image_specific_threshold(net, img, 1, binary, grid);
  BinaryMask support = binarize(binary, 0.5);
  if (pick.theta > 0.0) {
    CHECK(pick.mask.v == support.v);
    CHECK(pick.theta == doctest::Approx(1.0 / 255.0));
  }

  // Exhaustive-scan oracle agreement on a small grid.
  std::vector<double> small_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  ThresholdPick best = image_specific_threshold(net, img, 2, map, small_grid);
  double best_score = 1e300;
  double best_theta = -1;
  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int feat = f1_forward(g, net.cfg, p, g.input(img, false));
  for (double theta : small_grid) {
    TensorF mask = mask_as_tensor(binarize(map, theta));
    AmcNodes amc = amc_forward(g, net.cfg, p, feat, 2, std::optional<int>(g.input(mask, false)));
    double score = double(g.value(g.bas_ratio(amc.s, amc.s_bkg, 1e-8f)).data[0]) +
                   double(g.value(g.mean_all(amc.m_f)).data[0]);
    if (score < best_score) {
      best_score = score;
      best_theta = theta;
    }
  }
  CHECK(best.theta == best_theta);
  CHECK(best.score == doctest::Approx(best_score).epsilon(1e-5));
}
