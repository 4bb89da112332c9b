#pragma once

#include <string>
#include <vector>

#include "bas/losses.hpp"
#include "bas/metrics.hpp"
#include "bas/model.hpp"
#include "bas/synth_data.hpp"

namespace bas {

struct ThresholdPick {
  double theta = 0;
  double score = 0;  // l_bas + l_ac of the winning binary mask
  BinaryMask mask;   // at feature resolution
};

// Evaluates every candidate threshold by treating the binarized map as the
// foreground map, running the masked tail pass, and scoring
// l_bas + l_ac; returns the argmin (ties to the smaller theta). The map lives
// at feature resolution, matching the extractor output of `image`.
ThresholdPick image_specific_threshold(const BasNet& net, const TensorF& image, int target_class,
                                       const Map2D& map, const std::vector<double>& grid,
                                       double epsilon = 1e-8);

struct ThresholdSearchResult {
  double miou_global = 0;        // best single threshold over the grid
  double best_global_theta = 0;
  double miou_image_specific = 0;
  // one row per (sample, class): sample id, class, theta*, score
  struct Row {
    int sample = 0;
    int cls = 0;
    double theta = 0;
    double score = 0;
  };
  std::vector<Row> rows;
};

// Seed-quality comparison on a split: mIoU with the best global threshold
// versus mIoU with per-image thresholds picked by the loss score. Per-class
// maps are upsampled to image resolution for the mIoU; the threshold score
// itself runs at feature resolution.
ThresholdSearchResult threshold_search(const BasNet& net, const Manifest& data,
                                       const std::vector<double>& grid, double epsilon = 1e-8);

void write_threshold_rows_csv(const std::string& path, const ThresholdSearchResult& r);

}  // namespace bas
