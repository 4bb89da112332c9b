#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bas/graph.hpp"
#include "bas/rng.hpp"
#include "bas/tensor.hpp"

namespace bas {

struct ConvSpec {
  int channels = 0;
  int stride = 1;
};

// Desk-scale BAS topology. The backbone trunk is a stack of bias-free
// 3x3 conv+ReLU blocks; it is split at `generator_stage` into the feature
// extractor (blocks before the split) and the classification tail (the
// remaining blocks plus a bias-free 1x1 conv to C channels). The generator
// taps the extractor output with a single 3x3 conv + sigmoid per class.
//
// legacy_relu selects the older variant where a ReLU terminates the tail and
// the activation values are read directly; the default applies ReLU
// separately when forming the activation values instead.
struct ModelConfig {
  int num_classes = 5;
  int input_size = 64;
  std::vector<ConvSpec> blocks = {{16, 2}, {32, 2}, {64, 1}, {64, 1}, {64, 1}};
  int generator_stage = 3;  // extractor = blocks[0 .. generator_stage)
  bool legacy_relu = false;
  bool agnostic_head = false;

  void validate() const;
  int feature_channels() const { return blocks[size_t(generator_stage) - 1].channels; }
  int feature_size() const;
};

template <typename T>
struct BasNetT {
  ModelConfig cfg;
  std::vector<Tensor<T>> trunk;  // [Cout,Cin,3,3] per block, bias-free
  Tensor<T> head_w;              // [C,lastC,1,1], bias-free
  Tensor<T> gen_w;               // [C,featC,3,3]
  Tensor<T> gen_b;               // [C]
  Tensor<T> agn_w;               // [1,featC,3,3] when agnostic_head
  Tensor<T> agn_b;               // [1]

  // Fixed parameter walk; checkpoint layout and the optimizer both follow it.
  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (size_t i = 0; i < trunk.size(); ++i) fn("trunk." + std::to_string(i) + ".weight", trunk[i]);
    fn("head.weight", head_w);
    fn("generator.weight", gen_w);
    fn("generator.bias", gen_b);
    if (cfg.agnostic_head) {
      fn("agnostic.weight", agn_w);
      fn("agnostic.bias", agn_b);
    }
  }
  template <typename Fn>
  void for_each_param(Fn&& fn) const {
    const_cast<BasNetT*>(this)->for_each_param(
        [&](const std::string& name, Tensor<T>& t) { fn(name, const_cast<const Tensor<T>&>(t)); });
  }
};

using BasNet = BasNetT<float>;

// Kaiming fan-in init from the seeded stream; the generator conv starts at
// small scale so the initial maps sit near 0.5.
BasNet init_net(const ModelConfig& cfg, uint64_t seed);

BasNetT<double> widen_net(const BasNet& net);

// Node ids of the network parameters inside one graph.
struct ParamNodes {
  std::vector<int> trunk;
  int head_w = -1;
  int gen_w = -1, gen_b = -1;
  int agn_w = -1, agn_b = -1;
};

struct AmcNodes {
  int features = -1;   // extractor output [N,h,w]
  int maps = -1;       // generator output [C,h,w], -1 when a mask override is used
  int m_f = -1;        // selected foreground map [1,h,w]
  int m_b = -1;        // coupled background map, complement of m_f
  int f2_full = -1;    // tail map of the unmasked features [C,h,w]
  int y_full = -1;     // logits of the full image [C]
  int y_bkg = -1;      // logits of the background-masked features [C]
  int y_frg = -1;      // logits of the foreground-gated tail map [C]
  int s = -1;          // activation value, scalar >= 0
  int s_bkg = -1;      // background activation value, scalar >= 0
};

// Plain-value bundle mirroring AmcNodes.
struct AmcOutputs {
  TensorF y_full, y_bkg, y_frg;
  float s = 0, s_bkg = 0;
  TensorF m_f, m_b;
};

template <typename T>
ParamNodes add_params(Graph<T>& g, const BasNetT<T>& net, bool requires_grad) {
  ParamNodes p;
  for (const auto& w : net.trunk) p.trunk.push_back(g.input(w, requires_grad));
  p.head_w = g.input(net.head_w, requires_grad);
  p.gen_w = g.input(net.gen_w, requires_grad);
  p.gen_b = g.input(net.gen_b, requires_grad);
  if (net.cfg.agnostic_head) {
    p.agn_w = g.input(net.agn_w, requires_grad);
    p.agn_b = g.input(net.agn_b, requires_grad);
  }
  return p;
}

// Extractor forward: trunk blocks up to the generator split.
template <typename T>
int f1_forward(Graph<T>& g, const ModelConfig& cfg, const ParamNodes& p, int image) {
  int x = image;
  for (int i = 0; i < cfg.generator_stage; ++i) {
    x = g.conv2d(x, p.trunk[size_t(i)], -1, cfg.blocks[size_t(i)].stride, 1);
    x = g.relu(x);
  }
  return x;
}

// Classification tail: remaining trunk blocks + 1x1 head. With `frozen` the
// weights enter through stop_gradient so the sweep leaves them untouched
// while gradients still flow to the masked features.
template <typename T>
int f2_forward(Graph<T>& g, const ModelConfig& cfg, const ParamNodes& p, int features, bool frozen) {
  int x = features;
  for (size_t i = size_t(cfg.generator_stage); i < cfg.blocks.size(); ++i) {
    int w = frozen ? g.stop_gradient(p.trunk[i]) : p.trunk[i];
    x = g.conv2d(x, w, -1, cfg.blocks[i].stride, 1);
    x = g.relu(x);
  }
  int hw = frozen ? g.stop_gradient(p.head_w) : p.head_w;
  x = g.conv2d(x, hw, -1, 1, 0);
  if (cfg.legacy_relu) x = g.relu(x);
  return x;
}

template <typename T>
int generator_forward(Graph<T>& g, const ParamNodes& p, int features) {
  return g.sigmoid(g.conv2d(features, p.gen_w, p.gen_b, 1, 1));
}

template <typename T>
int agnostic_forward(Graph<T>& g, const ParamNodes& p, int features) {
  return g.sigmoid(g.conv2d(features, p.agn_w, p.agn_b, 1, 1));
}

// The AMC forward pass given extractor features. Produces the full-image
// logits, the background logits through the frozen tail, the foreground-gated
// logits, and the two activation values. `mask_override`, when given, is used
// directly as the foreground map instead of the generator output (threshold
// evaluation and the degenerate-mask tests need this).
template <typename T>
AmcNodes amc_forward(Graph<T>& g, const ModelConfig& cfg, const ParamNodes& p, int features,
                     int target_class, std::optional<int> mask_override = std::nullopt,
                     bool skip_background = false, bool skip_foreground = false) {
  if (target_class < 0 || target_class >= cfg.num_classes)
    throw std::invalid_argument("amc_forward: class id " + std::to_string(target_class) +
                                " out of range for " + std::to_string(cfg.num_classes) + " classes");
  AmcNodes out;
  out.features = features;
  if (mask_override) {
    out.m_f = *mask_override;
  } else {
    out.maps = generator_forward(g, p, features);
    out.m_f = g.slice_channel(out.maps, target_class);
  }
  out.m_b = g.complement(out.m_f);

  out.f2_full = f2_forward(g, cfg, p, features, /*frozen=*/false);
  out.y_full = g.gap(out.f2_full);

  if (!skip_background) {
    int f_bkg = g.mask_mul(features, out.m_b);
    int f2_bkg = f2_forward(g, cfg, p, f_bkg, /*frozen=*/true);
    out.y_bkg = g.gap(f2_bkg);
  }
  if (!skip_foreground) {
    out.y_frg = g.gap(g.mask_mul(out.f2_full, out.m_f));
  }

  if (cfg.legacy_relu) {
    // Tail already ends in ReLU; the pooled values are non-negative as is.
    out.s = g.select(out.y_full, target_class);
    if (!skip_background) out.s_bkg = g.select(out.y_bkg, target_class);
  } else {
    out.s = g.relu(g.select(out.y_full, target_class));
    if (!skip_background) out.s_bkg = g.relu(g.select(out.y_bkg, target_class));
  }
  return out;
}

// Gradient-free conveniences on the float net.

TensorF extract_features(const BasNet& net, const TensorF& image);
TensorF generate_maps(const BasNet& net, const TensorF& features);
AmcOutputs run_amc(const BasNet& net, const TensorF& image, int target_class,
                   const TensorF* mask_override = nullptr);

struct InferResult {
  TensorF logits;         // [C]
  TensorF fused;          // [1,h,w], mean of the selected maps
  TensorF maps;           // [C,h,w]
  std::vector<int> used;  // class ids fused, in rank order
};

// Top-k fusion: average the maps of the k highest-logit classes. When
// `force_class` is set and absent from the top k it replaces the last slot
// (ground-truth-known evaluation).
InferResult infer(const BasNet& net, const TensorF& image, int k,
                  std::optional<int> force_class = std::nullopt);

}  // namespace bas
