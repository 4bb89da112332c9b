#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bas/model.hpp"
#include "bas/synth_data.hpp"
#include "bas/types2d.hpp"

namespace bas {

// Morphology ladder: n > 0 dilates with an all-ones square structuring
// element of side 5n, n < 0 erodes with side 5|n|, n = 0 is the identity.
// Pixels outside the frame count as background (zero padding), and even-sided
// elements anchor at floor(side/2).
BinaryMask morph_mask(const BinaryMask& gt, int n);

struct CurvePoint {
  int n = 0;
  double area_ratio = 0;           // mask area / ground-truth mask area
  double entropy = 0;              // cross-entropy of the masked features
  double activation_norm = 0;      // S(mask) / S(full image)
  double bkg_activation_norm = 0;  // S(complement) / S(full image)
};

struct SampleCurve {
  int sample_id = 0;
  std::vector<CurvePoint> points;
  bool skipped = false;  // full-image activation too small to normalize
  int omitted_points = 0;  // erosions that emptied the mask
};

// Masks the extractor features with each morphed ground-truth mask
// (area-averaged to feature resolution, then binarized at 0.5), runs the
// classification tail and records the ground-truth-class entropy and the
// ReLU'd activation, normalized by the full-image activation.
SampleCurve curve_for_sample(const BasNet& net, const TensorF& image, const BinaryMask& gt_mask,
                             int gt_class, int sample_id, const std::vector<int>& n_range,
                             double eps = 1e-12);

struct AggregateBin {
  double center = 0;
  int count = 0;
  bool low_count = false;  // fewer than 5 points
  double entropy_mean = 0, entropy_std = 0;
  double activation_mean = 0, activation_std = 0;
  double bkg_activation_mean = 0, bkg_activation_std = 0;
};

struct AggregateCurves {
  std::vector<AggregateBin> bins;
  int samples_used = 0;
  int samples_skipped = 0;
};

// Fixed-width bins over [lo, hi); points outside the range are dropped.
AggregateCurves aggregate_curves(const std::vector<SampleCurve>& curves, int num_bins = 20,
                                 double lo = 0.0, double hi = 2.0);

std::vector<int> default_n_range();  // {-4..-1, 0, 1..8}

void write_sample_curves_csv(const std::string& path, const std::vector<SampleCurve>& curves);
void write_aggregate_csv(const std::string& path, const AggregateCurves& agg);

}  // namespace bas
