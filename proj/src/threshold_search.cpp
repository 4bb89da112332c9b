#include "bas/threshold_search.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bas {

namespace {

// Forward of the masked tail branch only; values match the frozen branch of
// the training graph (freezing changes gradients, not values).
TensorF bkg_logits(const BasNet& net, const TensorF& features, const TensorF& mask_feat) {
  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int f = g.input(features, false);
  int m = g.input(mask_feat, false);
  int masked = g.mask_mul(f, g.complement(m));
  return g.value(g.gap(f2_forward(g, net.cfg, p, masked, false)));
}

float relu_val(float v) { return v > 0 ? v : 0; }

}  // namespace

ThresholdPick image_specific_threshold(const BasNet& net, const TensorF& image, int target_class,
                                       const Map2D& map, const std::vector<double>& grid,
                                       double epsilon) {
  if (grid.empty()) throw std::invalid_argument("image_specific_threshold: empty threshold grid");
  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int img = g.input(image, false);
  int feat_node = f1_forward(g, net.cfg, p, img);
  TensorF features = g.value(feat_node);
  TensorF y_full = g.value(g.gap(f2_forward(g, net.cfg, p, feat_node, false)));
  const double s = double(relu_val(y_full.data[size_t(target_class)]));

  if (map.h != features.shape[1] || map.w != features.shape[2])
    throw std::invalid_argument("image_specific_threshold: map extent " + std::to_string(map.w) +
                                "x" + std::to_string(map.h) +
                                " does not match feature resolution");

  ThresholdPick best;
  bool have = false;
  for (double theta : grid) {
    BinaryMask m = binarize(map, theta);
    TensorF mask_feat = mask_as_tensor(m);
    TensorF y_bkg = bkg_logits(net, features, mask_feat);
    const double s_bkg = double(relu_val(y_bkg.data[size_t(target_class)]));
    const double area = double(m.area()) / double(m.v.size());
    const double score = l_bas_value(s, s_bkg, epsilon) + area;
    // Strict < keeps the smallest theta on ties.
    if (!have || score < best.score) {
      have = true;
      best.theta = theta;
      best.score = score;
      best.mask = std::move(m);
    }
  }
  return best;
}

namespace {

// Pixel label among the positive classes: candidates are classes whose map
// clears their threshold, the highest response wins (lower class id on ties).
std::vector<uint8_t> semantic_from_thresholds(const std::vector<int>& labels,
                                              const std::vector<Map2D>& maps_up,
                                              const std::vector<double>& thetas) {
  const size_t hw = maps_up.empty() ? 0 : maps_up[0].v.size();
  std::vector<uint8_t> sem(hw, 0);
  for (size_t px = 0; px < hw; ++px) {
    int best_cls = -1;
    float best_v = 0;
    for (size_t c = 0; c < labels.size(); ++c) {
      float v = maps_up[c].v[px];
      if (double(v) < thetas[c]) continue;
      if (best_cls < 0 || v > best_v) {
        best_cls = labels[c];
        best_v = v;
      }
    }
    if (best_cls >= 0) sem[px] = uint8_t(best_cls + 1);
  }
  return sem;
}

}  // namespace

ThresholdSearchResult threshold_search(const BasNet& net, const Manifest& data,
                                       const std::vector<double>& grid, double epsilon) {
  if (data.entries.empty()) throw std::invalid_argument("threshold_search: dataset is empty");
  const int n = int(data.entries.size());
  const int img_size = net.cfg.input_size;

  struct PerSample {
    std::vector<int> labels;
    std::vector<Map2D> maps_up;   // per positive class, image resolution
    std::vector<double> thetas;   // picked per class
    std::vector<double> scores;
    std::vector<uint8_t> gt_sem;
  };
  std::vector<PerSample> per(static_cast<size_t>(n));

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    Sample s = load_sample(data, size_t(i));
    PerSample& ps = per[size_t(i)];
    ps.labels = s.labels;
    ps.gt_sem = semantic_mask(s, img_size);
    TensorF features = extract_features(net, s.image);
    TensorF maps = generate_maps(net, features);
    for (size_t c = 0; c < s.labels.size(); ++c) {
      Map2D feat_map = channel_as_map(maps, s.labels[c]);
      ThresholdPick pick = image_specific_threshold(net, s.image, s.labels[c], feat_map, grid, epsilon);
      ps.thetas.push_back(pick.theta);
      ps.scores.push_back(pick.score);
      ps.maps_up.push_back(upsample_bilinear(feat_map, img_size, img_size));
    }
  }

  ThresholdSearchResult result;
  for (int i = 0; i < n; ++i)
    for (size_t c = 0; c < per[size_t(i)].labels.size(); ++c)
      result.rows.push_back({i, per[size_t(i)].labels[c], per[size_t(i)].thetas[c],
                             per[size_t(i)].scores[c]});

  std::vector<std::vector<uint8_t>> gt;
  gt.reserve(size_t(n));
  for (const auto& ps : per) gt.push_back(ps.gt_sem);

  // Best single threshold across the whole split.
  double best_global = -1, best_theta = grid.front();
  for (double theta : grid) {
    std::vector<std::vector<uint8_t>> pred;
    pred.reserve(size_t(n));
    for (const auto& ps : per) {
      std::vector<double> thetas(ps.labels.size(), theta);
      pred.push_back(semantic_from_thresholds(ps.labels, ps.maps_up, thetas));
    }
    double m = miou(pred, gt, net.cfg.num_classes);
    if (m > best_global) {
      best_global = m;
      best_theta = theta;
    }
  }
  result.miou_global = best_global;
  result.best_global_theta = best_theta;

  std::vector<std::vector<uint8_t>> pred;
  pred.reserve(size_t(n));
  for (const auto& ps : per) pred.push_back(semantic_from_thresholds(ps.labels, ps.maps_up, ps.thetas));
  result.miou_image_specific = miou(pred, gt, net.cfg.num_classes);
  return result;
}

void write_threshold_rows_csv(const std::string& path, const ThresholdSearchResult& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("threshold_search: cannot write " + path);
  os << "sample,class,theta,score\n";
  char buf[96];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g\n", row.sample, row.cls, row.theta, row.score);
    os << buf;
  }
}

}  // namespace bas
