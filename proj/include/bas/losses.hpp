#pragma once

#include <stdexcept>
#include <vector>

#include "bas/graph.hpp"
#include "bas/model.hpp"

namespace bas {

// Objective weights. The default policy keeps the area term balanced against
// the guidance and suppression terms (beta = alpha + lambda).
struct LossWeights {
  double alpha = 0.5;
  double beta = 1.5;
  double lambda = 1.0;
  double epsilon = 1e-8;

  static LossWeights balanced(double alpha, double lambda = 1.0, double epsilon = 1e-8) {
    LossWeights w;
    w.alpha = alpha;
    w.lambda = lambda;
    w.beta = alpha + lambda;
    w.epsilon = epsilon;
    return w;
  }
};

struct LossBundle {
  double l_cls = 0, l_frg = 0, l_ac = 0, l_bas = 0;
  double total = 0;
};

struct LossNodes {
  int l_cls = -1, l_frg = -1, l_ac = -1, l_bas = -1;
  int total = -1;
};

// Suppression ratio on plain values, mirroring Graph::bas_ratio.
inline double l_bas_value(double s, double s_bkg, double eps) {
  if (s < 0 || s_bkg < 0)
    throw std::invalid_argument("l_bas: activation values must be non-negative");
  double raw = s_bkg / (s + eps);
  return raw < 1.0 ? raw : 1.0;
}

namespace detail {

template <typename T>
int weighted_total(Graph<T>& g, const LossNodes& n, const LossWeights& w) {
  int total = n.l_cls;
  auto push = [&](int term, double weight) {
    if (term < 0 || weight == 0.0) return;
    int scaled = g.scale(term, T(weight));
    total = total < 0 ? scaled : g.add(total, scaled);
  };
  if (total < 0) throw std::invalid_argument("loss total: classification term missing");
  push(n.l_frg, w.alpha);
  push(n.l_ac, w.beta);
  push(n.l_bas, w.lambda);
  return total;
}

}  // namespace detail

// Single-label total: L = L_cls + alpha L_frg + beta L_ac + lambda L_bas.
// Terms whose weight is zero may be absent (their node id stays -1).
template <typename T>
LossNodes build_wsol_loss(Graph<T>& g, const AmcNodes& amc, int target_class,
                          const LossWeights& w) {
  LossNodes n;
  n.l_cls = g.softmax_cross_entropy(amc.y_full, target_class);
  if (w.alpha != 0.0) n.l_frg = g.softmax_cross_entropy(amc.y_frg, target_class);
  if (w.beta != 0.0) n.l_ac = g.mean_all(amc.m_f);
  if (w.lambda != 0.0) n.l_bas = g.bas_ratio(amc.s, amc.s_bkg, T(w.epsilon));
  n.total = detail::weighted_total(g, n, w);
  return n;
}

// Multi-label total: the classification term is replaced by the
// foreground/background competition loss; the map-coupled terms follow the
// randomly drawn foreground class whose AMC pass is given.
template <typename T>
LossNodes build_wsss_loss(Graph<T>& g, const AmcNodes& amc, const std::vector<int>& positives,
                          int fg_class, const LossWeights& w) {
  LossNodes n;
  n.l_cls = g.multilabel_cross_entropy(amc.y_full, positives);
  if (w.alpha != 0.0) n.l_frg = g.softmax_cross_entropy(amc.y_frg, fg_class);
  if (w.beta != 0.0) n.l_ac = g.mean_all(amc.m_f);
  if (w.lambda != 0.0) n.l_bas = g.bas_ratio(amc.s, amc.s_bkg, T(w.epsilon));
  n.total = detail::weighted_total(g, n, w);
  return n;
}

// Class-agnostic supervision: sum of the per-class suppression ratios with
// the background taken as the complement of the agnostic map. The full-branch
// and masked-branch tail maps are computed once and indexed per class;
// callers that already ran the tail pass its logits node as `y_full`.
template <typename T>
int build_agnostic_bas(Graph<T>& g, const ModelConfig& cfg, const ParamNodes& p, int features,
                       int agnostic_map, const std::vector<int>& positives, const LossWeights& w,
                       int y_full = -1) {
  if (positives.empty())
    throw std::invalid_argument("l_bas_agnostic: positive class set is empty");
  int m_b = g.complement(agnostic_map);
  int f_bkg = g.mask_mul(features, m_b);
  if (y_full < 0) y_full = g.gap(f2_forward(g, cfg, p, features, /*frozen=*/false));
  int y_bkg = g.gap(f2_forward(g, cfg, p, f_bkg, /*frozen=*/true));
  int total = -1;
  for (int cls : positives) {
    int s, s_bkg;
    if (cfg.legacy_relu) {
      s = g.select(y_full, cls);
      s_bkg = g.select(y_bkg, cls);
    } else {
      s = g.relu(g.select(y_full, cls));
      s_bkg = g.relu(g.select(y_bkg, cls));
    }
    int term = g.bas_ratio(s, s_bkg, T(w.epsilon));
    total = total < 0 ? term : g.add(total, term);
  }
  return total;
}

template <typename T>
LossBundle read_bundle(const Graph<T>& g, const LossNodes& n) {
  LossBundle b;
  auto val = [&](int id) { return id < 0 ? 0.0 : double(g.value(id).data[0]); };
  b.l_cls = val(n.l_cls);
  b.l_frg = val(n.l_frg);
  b.l_ac = val(n.l_ac);
  b.l_bas = val(n.l_bas);
  b.total = val(n.total);
  return b;
}

}  // namespace bas
