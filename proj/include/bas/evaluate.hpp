#pragma once

#include <string>
#include <vector>

#include "bas/metrics.hpp"
#include "bas/model.hpp"
#include "bas/synth_data.hpp"

namespace bas {

struct EvalConfig {
  int k = 1;
  double theta_box = 0.5;  // binarization threshold for box extraction
  double theta_bg = 0.5;   // background cutoff for seed labeling
  std::vector<double> deltas = {0.3, 0.5, 0.7};
  bool strict_iou = false;
  bool force_include_gt = true;     // ground-truth-known map selection
  std::string combine = "off";      // off | replace | average (agnostic head)
};

// Full metric pass over a split. Single-label data gets the box metrics and
// the mask metrics of the ground-truth class map; multi-label data evaluates
// masks and the seed mIoU only.
MetricReport run_eval(const BasNet& net, const Manifest& data, const EvalConfig& cfg);

}  // namespace bas
