#pragma once

// Brute-force reference implementations backing the metric tests and the
// acceptance suite. Everything here is written as naively as possible and
// stays independent of src/ internals: membership loops instead of interval
// arithmetic, recursive flood fill instead of label propagation, per-threshold
// recounts instead of cumulative sums.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "bas/types2d.hpp"

namespace oracle {

using bas::BinaryMask;
using bas::Box;
using bas::Map2D;

inline bool in_box(const Box& b, int x, int y) {
  return x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
}

// Box IoU by counting pixels on an enclosing grid.
inline double iou_box_pixels(const Box& a, const Box& b) {
  int x1 = std::max(a.x1, b.x1), y1 = std::max(a.y1, b.y1);
  int x0 = std::min(a.x0, b.x0), y0 = std::min(a.y0, b.y0);
  long long inter = 0, uni = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      bool ia = in_box(a, x, y), ib = in_box(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

inline double iou_mask_popcount(const BinaryMask& a, const BinaryMask& b) {
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    inter += (a.v[i] != 0) && (b.v[i] != 0);
    uni += (a.v[i] != 0) || (b.v[i] != 0);
  }
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

inline void flood(const BinaryMask& m, std::vector<int>& label, int y, int x, int lab) {
  if (y < 0 || y >= m.h || x < 0 || x >= m.w) return;
  size_t i = size_t(y) * m.w + x;
  if (!m.v[i] || label[i] >= 0) return;
  label[i] = lab;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if (dy || dx) flood(m, label, y + dy, x + dx, lab);
}

// Largest 8-connected component, ties by the smaller first raster index.
inline std::optional<Box> bbox_largest_component(const BinaryMask& m) {
  std::vector<int> label(m.v.size(), -1);
  int next = 0;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x) && label[size_t(y) * m.w + x] < 0) flood(m, label, y, x, next++);
  if (next == 0) return std::nullopt;

  std::vector<long long> size(size_t(next), 0);
  std::vector<size_t> first(size_t(next), m.v.size());
  for (size_t i = 0; i < m.v.size(); ++i)
    if (label[i] >= 0) {
      size[size_t(label[i])]++;
      first[size_t(label[i])] = std::min(first[size_t(label[i])], i);
    }
  int best = 0;
  for (int l = 1; l < next; ++l)
    if (size[size_t(l)] > size[size_t(best)] ||
        (size[size_t(l)] == size[size_t(best)] && first[size_t(l)] < first[size_t(best)]))
      best = l;

  Box box{m.w, m.h, 0, 0};
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (label[size_t(y) * m.w + x] == best) {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
  return box;
}

inline BinaryMask threshold(const Map2D& m, double theta) {
  BinaryMask out(m.h, m.w);
  for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = double(m.v[i]) >= theta ? 1 : 0;
  return out;
}

inline std::vector<double> grid256() {
  std::vector<double> g;
  for (int i = 0; i < 256; ++i) g.push_back(double(i) / 255.0);
  return g;
}

inline double piou_sweep(const std::vector<Map2D>& maps, const std::vector<BinaryMask>& gts) {
  double peak = 0;
  for (double theta : grid256()) {
    double mean = 0;
    for (size_t i = 0; i < maps.size(); ++i)
      mean += iou_mask_popcount(threshold(maps[i], theta), gts[i]);
    mean /= double(maps.size());
    peak = std::max(peak, mean);
  }
  return peak;
}

inline double maxboxacc_sweep(const std::vector<Map2D>& maps, const std::vector<Box>& gts,
                              const std::vector<double>& deltas) {
  double total = 0;
  for (double delta : deltas) {
    double best = 0;
    for (double theta : grid256()) {
      int hits = 0;
      for (size_t i = 0; i < maps.size(); ++i) {
        auto box = bbox_largest_component(threshold(maps[i], theta));
        double iou = box ? iou_box_pixels(*box, gts[i]) : 0.0;
        hits += iou >= delta;
      }
      best = std::max(best, double(hits) / double(maps.size()));
    }
    total += best;
  }
  return total / double(deltas.size());
}

// Average precision over pooled pixels: one threshold per distinct value,
// every count redone from scratch.
inline double pxap_bruteforce(const std::vector<Map2D>& maps,
                              const std::vector<BinaryMask>& gts) {
  std::vector<float> values;
  std::vector<uint8_t> labels;
  long long positives = 0;
  for (size_t i = 0; i < maps.size(); ++i)
    for (size_t p = 0; p < maps[i].v.size(); ++p) {
      values.push_back(maps[i].v[p]);
      labels.push_back(gts[i].v[p]);
      positives += gts[i].v[p];
    }
  if (positives == 0) return 0.0;

  std::set<float, std::greater<float>> distinct(values.begin(), values.end());
  double ap = 0, prev_recall = 0;
  for (float theta : distinct) {
    long long tp = 0, fp = 0;
    for (size_t i = 0; i < values.size(); ++i)
      if (values[i] >= theta) {
        if (labels[i])
          ++tp;
        else
          ++fp;
      }
    double precision = double(tp) / double(tp + fp);
    double recall = double(tp) / double(positives);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// Mean IoU through an explicit confusion matrix.
inline double miou_confusion(const std::vector<std::vector<uint8_t>>& pred,
                             const std::vector<std::vector<uint8_t>>& gt, int num_classes) {
  const int k = num_classes + 1;
  std::vector<std::vector<long long>> conf(size_t(k), std::vector<long long>(size_t(k), 0));
  for (size_t s = 0; s < pred.size(); ++s)
    for (size_t i = 0; i < pred[s].size(); ++i) conf[pred[s][i]][gt[s][i]]++;
  double sum = 0;
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    long long row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += conf[size_t(c)][size_t(j)];
      col += conf[size_t(j)][size_t(c)];
    }
    long long uni = row + col - conf[size_t(c)][size_t(c)];
    if (uni == 0) continue;
    sum += double(conf[size_t(c)][size_t(c)]) / double(uni);
    ++counted;
  }
  return counted ? sum / counted : 0.0;
}

struct LocCase {
  std::vector<float> logits;
  Map2D fused;
  int gt_class;
  Box gt_box;
};

inline void loc_accuracy_naive(const std::vector<LocCase>& cases, double theta, double delta,
                               double& gt_known, double& top1, double& top5) {
  gt_known = top1 = top5 = 0;
  for (const auto& c : cases) {
    auto box = bbox_largest_component(threshold(c.fused, theta));
    bool hit = (box ? iou_box_pixels(*box, c.gt_box) : 0.0) >= delta;
    int rank = 0;
    for (size_t j = 0; j < c.logits.size(); ++j) {
      if (int(j) == c.gt_class) continue;
      if (c.logits[j] > c.logits[size_t(c.gt_class)] ||
          (c.logits[j] == c.logits[size_t(c.gt_class)] && int(j) < c.gt_class))
        ++rank;
    }
    gt_known += hit;
    top1 += hit && rank < 1;
    top5 += hit && rank < 5;
  }
  gt_known /= double(cases.size());
  top1 /= double(cases.size());
  top5 /= double(cases.size());
}

}  // namespace oracle
