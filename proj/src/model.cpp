#include "bas/model.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace bas {

void ModelConfig::validate() const {
  if (num_classes < 2)
    throw std::invalid_argument("model: num_classes must be at least 2, got " +
                                std::to_string(num_classes));
  if (blocks.empty()) throw std::invalid_argument("model: trunk must have at least one block");
  if (generator_stage < 1 || generator_stage > int(blocks.size()))
    throw std::invalid_argument("model: generator_stage " + std::to_string(generator_stage) +
                                " outside [1, " + std::to_string(blocks.size()) + "]");
  for (const auto& b : blocks) {
    if (b.channels < 1) throw std::invalid_argument("model: block channels must be positive");
    if (b.stride < 1) throw std::invalid_argument("model: block stride must be positive");
  }
  if (input_size < 1) throw std::invalid_argument("model: input_size must be positive");
  int s = input_size;
  for (const auto& b : blocks) s = (s + 2 - 3) / b.stride + 1;
  if (s < 1) throw std::invalid_argument("model: input_size too small for the trunk strides");
}

int ModelConfig::feature_size() const {
  int s = input_size;
  for (int i = 0; i < generator_stage; ++i) s = (s + 2 - 3) / blocks[size_t(i)].stride + 1;
  return s;
}

namespace {

TensorF kaiming_conv(Rng& rng, int c_out, int c_in, int k, double gain) {
  TensorF w({c_out, c_in, k, k});
  const double stddev = gain * std::sqrt(2.0 / (double(c_in) * k * k));
  for (auto& v : w.data) v = float(stddev * rng.normal());
  return w;
}

}  // namespace

BasNet init_net(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  BasNet net;
  net.cfg = cfg;
  Rng rng = Rng(seed).fork(0x6e6574);  // parameter stream
  int c_in = 3;
  for (const auto& b : cfg.blocks) {
    net.trunk.push_back(kaiming_conv(rng, b.channels, c_in, 3, 1.0));
    c_in = b.channels;
  }
  net.head_w = kaiming_conv(rng, cfg.num_classes, cfg.blocks.back().channels, 1, 1.0);
  // Small-scale generator start keeps the initial maps near 0.5.
  net.gen_w = kaiming_conv(rng, cfg.num_classes, cfg.feature_channels(), 3, 0.1);
  net.gen_b = TensorF({cfg.num_classes});
  if (cfg.agnostic_head) {
    net.agn_w = kaiming_conv(rng, 1, cfg.feature_channels(), 3, 0.1);
    net.agn_b = TensorF({1});
  }
  return net;
}

BasNetT<double> widen_net(const BasNet& net) {
  BasNetT<double> out;
  out.cfg = net.cfg;
  for (const auto& w : net.trunk) out.trunk.push_back(widen(w));
  out.head_w = widen(net.head_w);
  out.gen_w = widen(net.gen_w);
  out.gen_b = widen(net.gen_b);
  if (net.cfg.agnostic_head) {
    out.agn_w = widen(net.agn_w);
    out.agn_b = widen(net.agn_b);
  }
  return out;
}

TensorF extract_features(const BasNet& net, const TensorF& image) {
  if (image.rank() != 3 || image.shape[0] != 3 || image.shape[1] != net.cfg.input_size ||
      image.shape[2] != net.cfg.input_size)
    throw std::invalid_argument("extract_features: image shape " + image.shape_str() +
                                " does not match configured input [3," +
                                std::to_string(net.cfg.input_size) + "," +
                                std::to_string(net.cfg.input_size) + "]");
  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int img = g.input(image, false);
  return g.value(f1_forward(g, net.cfg, p, img));
}

TensorF generate_maps(const BasNet& net, const TensorF& features) {
  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int f = g.input(features, false);
  return g.value(generator_forward(g, p, f));
}

AmcOutputs run_amc(const BasNet& net, const TensorF& image, int target_class,
                   const TensorF* mask_override) {
  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int img = g.input(image, false);
  int feat = f1_forward(g, net.cfg, p, img);
  std::optional<int> ov;
  if (mask_override) ov = g.input(*mask_override, false);
  AmcNodes n = amc_forward(g, net.cfg, p, feat, target_class, ov);
  AmcOutputs out;
  out.y_full = g.value(n.y_full);
  out.y_bkg = g.value(n.y_bkg);
  out.y_frg = g.value(n.y_frg);
  out.s = g.value(n.s).data[0];
  out.s_bkg = g.value(n.s_bkg).data[0];
  out.m_f = g.value(n.m_f);
  out.m_b = g.value(n.m_b);
  return out;
}

InferResult infer(const BasNet& net, const TensorF& image, int k, std::optional<int> force_class) {
  const int c = net.cfg.num_classes;
  if (k < 1 || k > c)
    throw std::invalid_argument("infer: k " + std::to_string(k) + " outside [1, " +
                                std::to_string(c) + "]");
  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int img = g.input(image, false);
  int feat = f1_forward(g, net.cfg, p, img);
  int maps = generator_forward(g, p, feat);
  int logits = g.gap(f2_forward(g, net.cfg, p, feat, false));

  InferResult r;
  r.logits = g.value(logits);
  r.maps = g.value(maps);

  // Rank classes by logit, ties broken toward the lower class id.
  std::vector<int> order(static_cast<size_t>(c));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return r.logits.data[size_t(a)] > r.logits.data[size_t(b)];
  });
  r.used.assign(order.begin(), order.begin() + k);
  if (force_class) {
    if (std::find(r.used.begin(), r.used.end(), *force_class) == r.used.end())
      r.used.back() = *force_class;
  }

  const int h = r.maps.shape[1], w = r.maps.shape[2];
  r.fused = TensorF({1, h, w});
  const size_t hw = size_t(h) * w;
  if (k == 1) {
    // Exact copy of the single selected map.
    std::copy_n(r.maps.data.data() + size_t(r.used[0]) * hw, hw, r.fused.data.data());
  } else {
    for (size_t i = 0; i < hw; ++i) {
      double acc = 0;
      for (int cls : r.used) acc += double(r.maps.data[size_t(cls) * hw + i]);
      r.fused.data[i] = float(acc / double(k));
    }
  }
  return r;
}

}  // namespace bas
