#include "bas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace bas {

std::vector<double> threshold_grid_256() {
  std::vector<double> g(256);
  for (int i = 0; i < 256; ++i) g[size_t(i)] = double(i) / 255.0;
  return g;
}

BinaryMask binarize(const Map2D& map, double theta) {
  BinaryMask m(map.h, map.w);
  for (size_t i = 0; i < map.v.size(); ++i) m.v[i] = double(map.v[i]) >= theta ? 1 : 0;
  return m;
}

std::optional<Box> mask_to_bbox(const BinaryMask& mask) {
  const int h = mask.h, w = mask.w;
  std::vector<int> label(size_t(h) * w, -1);
  std::vector<size_t> stack;
  int best_label = -1;
  long long best_size = 0;
  Box best_box;
  int next = 0;
  for (size_t start = 0; start < mask.v.size(); ++start) {
    if (!mask.v[start] || label[start] >= 0) continue;
    const int lab = next++;
    long long count = 0;
    Box box{int(start % size_t(w)), int(start / size_t(w)), 0, 0};
    box.x1 = box.x0 + 1;
    box.y1 = box.y0 + 1;
    stack.assign(1, start);
    label[start] = lab;
    while (!stack.empty()) {
      size_t cur = stack.back();
      stack.pop_back();
      ++count;
      int y = int(cur / size_t(w)), x = int(cur % size_t(w));
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dy && !dx) continue;
          int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          size_t ni = size_t(ny) * w + nx;
          if (mask.v[ni] && label[ni] < 0) {
            label[ni] = lab;
            stack.push_back(ni);
          }
        }
    }
    // Components are discovered in raster order of their first pixel, so on a
    // size tie the earlier anchor wins.
    if (count > best_size) {
      best_size = count;
      best_label = lab;
      best_box = box;
    }
  }
  if (best_label < 0) return std::nullopt;
  return best_box;
}

double iou_box(const Box& a, const Box& b) {
  const long long ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const long long iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const long long inter = ix * iy;
  const long long uni = a.area() + b.area() - inter;
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

double iou_box(const std::optional<Box>& a, const Box& b) { return a ? iou_box(*a, b) : 0.0; }

double iou_mask(const BinaryMask& a, const BinaryMask& b) {
  if (a.h != b.h || a.w != b.w)
    throw std::invalid_argument("iou_mask: mask extents " + std::to_string(a.w) + "x" +
                                std::to_string(a.h) + " and " + std::to_string(b.w) + "x" +
                                std::to_string(b.h) + " differ");
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    inter += a.v[i] & b.v[i];
    uni += a.v[i] | b.v[i];
  }
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

Map2D upsample_bilinear(const Map2D& m, int out_h, int out_w) {
  Map2D out(out_h, out_w);
  const double sy = double(m.h) / out_h, sx = double(m.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = int(std::floor(fy));
    double ty = fy - y0;
    int y0c = std::clamp(y0, 0, m.h - 1), y1c = std::clamp(y0 + 1, 0, m.h - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = int(std::floor(fx));
      double tx = fx - x0;
      int x0c = std::clamp(x0, 0, m.w - 1), x1c = std::clamp(x0 + 1, 0, m.w - 1);
      double top = double(m.at(y0c, x0c)) * (1 - tx) + double(m.at(y0c, x1c)) * tx;
      double bot = double(m.at(y1c, x0c)) * (1 - tx) + double(m.at(y1c, x1c)) * tx;
      out.at(y, x) = float(top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

namespace {

bool iou_hit(double iou, double delta, bool strict) { return strict ? iou > delta : iou >= delta; }

// Rank of the ground-truth class by descending logit, ties toward the lower
// class id.
int rank_of(const std::vector<float>& logits, int cls) {
  int rank = 0;
  for (int j = 0; j < int(logits.size()); ++j) {
    if (j == cls) continue;
    if (logits[size_t(j)] > logits[size_t(cls)] || (logits[size_t(j)] == logits[size_t(cls)] && j < cls))
      ++rank;
  }
  return rank;
}

}  // namespace

LocAccuracies loc_accuracies(const std::vector<LocSample>& samples, double theta_box, double delta,
                             bool strict_iou) {
  if (samples.empty()) throw std::invalid_argument("loc_accuracies: empty sample set");
  std::vector<int> hits(samples.size(), 0), ranks(samples.size(), 0);
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < samples.size(); ++i) {
    const LocSample& s = samples[i];
    auto box = mask_to_bbox(binarize(s.fused, theta_box));
    hits[i] = iou_hit(iou_box(box, s.gt_box), delta, strict_iou) ? 1 : 0;
    ranks[i] = rank_of(s.logits, s.gt_class);
  }
  LocAccuracies acc;
  for (size_t i = 0; i < samples.size(); ++i) {
    acc.gt_known += hits[i];
    acc.top1 += hits[i] && ranks[i] < 1;
    acc.top5 += hits[i] && ranks[i] < 5;
  }
  const double n = double(samples.size());
  acc.gt_known /= n;
  acc.top1 /= n;
  acc.top5 /= n;
  return acc;
}

double maxboxaccv2(const std::vector<Map2D>& maps, const std::vector<Box>& gt_boxes,
                   const std::vector<double>& deltas, bool strict_iou) {
  if (maps.size() != gt_boxes.size())
    throw std::invalid_argument("maxboxaccv2: map and box counts differ");
  if (maps.empty()) return 0.0;
  const auto grid = threshold_grid_256();
  // IoU per (sample, threshold), computed once and reused for every delta.
  std::vector<std::vector<double>> ious(maps.size(), std::vector<double>(grid.size()));
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < maps.size(); ++i)
    for (size_t t = 0; t < grid.size(); ++t)
      ious[i][t] = iou_box(mask_to_bbox(binarize(maps[i], grid[t])), gt_boxes[i]);

  double total = 0;
  for (double delta : deltas) {
    double best = 0;
    for (size_t t = 0; t < grid.size(); ++t) {
      int hit = 0;
      for (size_t i = 0; i < maps.size(); ++i) hit += iou_hit(ious[i][t], delta, strict_iou);
      best = std::max(best, double(hit) / double(maps.size()));
    }
    total += best;
  }
  return total / double(deltas.size());
}

double piou(const std::vector<Map2D>& maps, const std::vector<BinaryMask>& gt_masks,
            std::vector<double>* iou_curve) {
  if (maps.size() != gt_masks.size())
    throw std::invalid_argument("piou: map and mask counts differ");
  if (maps.empty()) return 0.0;
  const auto grid = threshold_grid_256();
  std::vector<std::vector<double>> ious(maps.size(), std::vector<double>(grid.size()));
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < maps.size(); ++i)
    for (size_t t = 0; t < grid.size(); ++t)
      ious[i][t] = iou_mask(binarize(maps[i], grid[t]), gt_masks[i]);

  double peak = 0;
  std::vector<double> curve(grid.size(), 0.0);
  for (size_t t = 0; t < grid.size(); ++t) {
    double mean = 0;
    for (size_t i = 0; i < maps.size(); ++i) mean += ious[i][t];
    mean /= double(maps.size());
    curve[t] = mean;
    peak = std::max(peak, mean);
  }
  if (iou_curve) *iou_curve = std::move(curve);
  return peak;
}

double pxap(const std::vector<Map2D>& maps, const std::vector<BinaryMask>& gt_masks,
            std::vector<PrPoint>* curve_256) {
  if (maps.size() != gt_masks.size())
    throw std::invalid_argument("pxap: map and mask counts differ");
  // Pool every pixel of the evaluation set.
  std::vector<std::pair<float, uint8_t>> px;
  size_t total_pos = 0;
  for (size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].h != gt_masks[i].h || maps[i].w != gt_masks[i].w)
      throw std::invalid_argument("pxap: map and mask extents differ at sample " +
                                  std::to_string(i));
    for (size_t p = 0; p < maps[i].v.size(); ++p) {
      px.emplace_back(maps[i].v[p], gt_masks[i].v[p]);
      total_pos += gt_masks[i].v[p];
    }
  }
  if (px.empty() || total_pos == 0) return 0.0;
  std::sort(px.begin(), px.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  double ap = 0;
  double prev_recall = 0;
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < px.size()) {
    // One threshold per distinct predicted value.
    const float v = px[i].first;
    while (i < px.size() && px[i].first == v) {
      tp += px[i].second;
      fp += 1 - px[i].second;
      ++i;
    }
    const double precision = double(tp) / double(tp + fp);
    const double recall = double(tp) / double(total_pos);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }

  if (curve_256) {
    // Report-friendly resample on the fixed grid.
    curve_256->clear();
    const auto grid = threshold_grid_256();
    for (double theta : grid) {
      size_t tpg = 0, predg = 0;
      for (const auto& [val, pos] : px)
        if (double(val) >= theta) {
          ++predg;
          tpg += pos;
        }
      double precision = predg ? double(tpg) / double(predg) : 1.0;
      double recall = double(tpg) / double(total_pos);
      curve_256->push_back({theta, precision, recall});
    }
  }
  return ap;
}

std::vector<uint8_t> label_map(const std::vector<Map2D>& class_maps, double theta_bg) {
  if (class_maps.empty()) throw std::invalid_argument("label_map: no class maps");
  const int h = class_maps[0].h, w = class_maps[0].w;
  std::vector<uint8_t> out(size_t(h) * w, 0);
  for (size_t p = 0; p < out.size(); ++p) {
    int best = -1;
    float best_v = 0;
    for (size_t c = 0; c < class_maps.size(); ++c) {
      const float v = class_maps[c].v[p];
      if (best < 0 || v > best_v) {
        best = int(c);
        best_v = v;
      }
    }
    if (double(best_v) >= theta_bg) out[p] = uint8_t(best + 1);
  }
  return out;
}

double miou(const std::vector<std::vector<uint8_t>>& pred_semantic,
            const std::vector<std::vector<uint8_t>>& gt_semantic, int num_classes) {
  if (pred_semantic.size() != gt_semantic.size())
    throw std::invalid_argument("miou: prediction and ground-truth counts differ");
  const int k = num_classes + 1;  // plus background
  std::vector<long long> inter(size_t(k), 0), pred_n(size_t(k), 0), gt_n(size_t(k), 0);
  for (size_t s = 0; s < pred_semantic.size(); ++s) {
    if (pred_semantic[s].size() != gt_semantic[s].size())
      throw std::invalid_argument("miou: semantic extents differ at sample " + std::to_string(s));
    for (size_t p = 0; p < pred_semantic[s].size(); ++p) {
      const uint8_t pr = pred_semantic[s][p], gt = gt_semantic[s][p];
      pred_n[pr]++;
      gt_n[gt]++;
      if (pr == gt) inter[pr]++;
    }
  }
  double sum = 0;
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    const long long uni = pred_n[size_t(c)] + gt_n[size_t(c)] - inter[size_t(c)];
    if (uni == 0) continue;  // class absent everywhere
    sum += double(inter[size_t(c)]) / double(uni);
    ++counted;
  }
  return counted ? sum / counted : 0.0;
}

Map2D combine_foreground(const Map2D& specific, const Map2D& agnostic, CombineStrategy strategy) {
  if (specific.h != agnostic.h || specific.w != agnostic.w)
    throw std::invalid_argument("combine_foreground: map extents differ");
  Map2D out = specific;
  for (size_t i = 0; i < out.v.size(); ++i) {
    if (specific.v[i] > agnostic.v[i]) {
      out.v[i] = strategy == CombineStrategy::kReplace
                     ? agnostic.v[i]
                     : float((double(specific.v[i]) + double(agnostic.v[i])) / 2.0);
    }
  }
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v)
      j[key] = *v;
    else
      j[key] = nullptr;
  };
  j["mode"] = mode;
  j["k"] = k;
  j["theta_box"] = theta_box;
  j["theta_bg"] = theta_bg;
  put("gt_known", gt_known);
  put("top1_loc", top1_loc);
  put("top5_loc", top5_loc);
  put("maxboxaccv2", maxboxaccv2);
  put("piou", piou);
  put("pxap", pxap);
  put("miou", miou);
  return j.dump(2);
}

void write_iou_curve_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("metrics: cannot write " + path);
  os << "threshold,iou\n";
  for (size_t i = 0; i < curve.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", double(i) / 255.0, curve[i]);
    os << buf;
  }
}

void write_pr_curve_csv(const std::string& path, const std::vector<PrPoint>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("metrics: cannot write " + path);
  os << "threshold,precision,recall\n";
  for (const auto& p : curve) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.threshold, p.precision, p.recall);
    os << buf;
  }
}

}  // namespace bas
