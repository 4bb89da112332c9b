#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bas/types2d.hpp"

namespace bas {

// The threshold grid shared by every sweep-based metric: {i/255, i=0..255}.
std::vector<double> threshold_grid_256();

BinaryMask binarize(const Map2D& map, double theta);

// Tight box of the largest 8-connected component; ties go to the component
// whose top-left pixel has the smaller raster index. Empty masks yield
// nothing and score IoU 0 downstream.
std::optional<Box> mask_to_bbox(const BinaryMask& mask);

double iou_box(const Box& a, const Box& b);
double iou_box(const std::optional<Box>& a, const Box& b);
double iou_mask(const BinaryMask& a, const BinaryMask& b);

// Bilinear resize to the evaluation resolution (half-pixel-centered sampling).
Map2D upsample_bilinear(const Map2D& m, int out_h, int out_w);

struct LocSample {
  std::vector<float> logits;
  Map2D fused;  // localization map at evaluation resolution
  int gt_class = 0;
  Box gt_box;
};

struct LocAccuracies {
  double gt_known = 0, top1 = 0, top5 = 0;
};

// Box localization accuracies at a fixed binarization threshold. A hit needs
// IoU >= delta (strict > behind the flag); top-1/top-5 additionally require
// the ground-truth class inside the top ranks.
LocAccuracies loc_accuracies(const std::vector<LocSample>& samples, double theta_box,
                             double delta = 0.5, bool strict_iou = false);

// Mean over delta in {0.3,0.5,0.7} of the best box accuracy across the
// 256-point binarization sweep.
double maxboxaccv2(const std::vector<Map2D>& maps, const std::vector<Box>& gt_boxes,
                   const std::vector<double>& deltas = {0.3, 0.5, 0.7}, bool strict_iou = false);

// Peak over the threshold sweep of the mean mask IoU. The full IoU-threshold
// curve (256 points) is exposed for reporting.
double piou(const std::vector<Map2D>& maps, const std::vector<BinaryMask>& gt_masks,
            std::vector<double>* iou_curve = nullptr);

struct PrPoint {
  double threshold, precision, recall;
};

// Pixel average precision: area under the pixel-level precision-recall curve
// with thresholds at every distinct predicted value pooled across the set,
// rectangle rule over recall increments. `curve_256`, when given, receives
// precision/recall sampled on the fixed 256-point grid for plotting.
double pxap(const std::vector<Map2D>& maps, const std::vector<BinaryMask>& gt_masks,
            std::vector<PrPoint>* curve_256 = nullptr);

// Seed labeling: argmax over per-class maps where the winning score reaches
// theta_bg, background otherwise. Semantic values: 0 background, class c at
// c+1.
std::vector<uint8_t> label_map(const std::vector<Map2D>& class_maps, double theta_bg);

// Mean IoU over background + C classes from pooled confusion counts; classes
// absent from both prediction and ground truth are left out of the mean.
double miou(const std::vector<std::vector<uint8_t>>& pred_semantic,
            const std::vector<std::vector<uint8_t>>& gt_semantic, int num_classes);

// Only pixels where the class-specific response exceeds the agnostic one are
// touched: "replace" takes the agnostic value, "average" the mean of both.
enum class CombineStrategy { kReplace, kAverage };
Map2D combine_foreground(const Map2D& specific, const Map2D& agnostic, CombineStrategy strategy);

struct MetricReport {
  std::optional<double> gt_known, top1_loc, top5_loc, maxboxaccv2, piou, pxap, miou;
  std::vector<double> iou_threshold_curve;  // 256 points
  std::vector<PrPoint> pr_curve;            // 256 points
  double theta_box = 0, theta_bg = 0;
  int k = 1;
  std::string mode;

  std::string to_json() const;
};

void write_iou_curve_csv(const std::string& path, const std::vector<double>& curve);
void write_pr_curve_csv(const std::string& path, const std::vector<PrPoint>& curve);

}  // namespace bas
