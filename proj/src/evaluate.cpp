#include "bas/evaluate.hpp"

#include <stdexcept>

namespace bas {

namespace {

struct EvalSample {
  std::vector<float> logits;
  Map2D fused_up;                 // ground-truth-class localization map
  std::vector<Map2D> class_maps;  // all classes, image resolution
  std::vector<int> labels;
  std::vector<BinaryMask> masks;
  std::vector<Box> boxes;
  std::vector<uint8_t> gt_sem;
};

Map2D maybe_combine(const Map2D& specific, const Map2D* agnostic, const std::string& strategy) {
  if (!agnostic || strategy == "off") return specific;
  return combine_foreground(specific, *agnostic,
                            strategy == "replace" ? CombineStrategy::kReplace
                                                  : CombineStrategy::kAverage);
}

}  // namespace

MetricReport run_eval(const BasNet& net, const Manifest& data, const EvalConfig& cfg) {
  if (data.entries.empty()) throw std::invalid_argument("eval: dataset is empty");
  if (cfg.combine != "off" && cfg.combine != "replace" && cfg.combine != "average")
    throw std::invalid_argument("eval: combine must be off, replace or average, got \"" +
                                cfg.combine + "\"");
  if (cfg.combine != "off" && !net.cfg.agnostic_head)
    throw std::invalid_argument("eval: combine strategy needs a net with the agnostic head");

  const int n = int(data.entries.size());
  const int img_size = net.cfg.input_size;
  bool multi = false;
  for (const auto& e : data.entries) multi = multi || e.labels.size() != 1;

  std::vector<EvalSample> ev(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    Sample s = load_sample(data, size_t(i));
    EvalSample& es = ev[size_t(i)];
    es.labels = s.labels;
    es.masks = std::move(s.masks);
    es.boxes = s.boxes;
    es.gt_sem = semantic_mask(s, img_size);

    InferResult inf = infer(net, s.image, cfg.k,
                            cfg.force_include_gt ? std::optional<int>(s.labels[0]) : std::nullopt);
    es.logits.assign(inf.logits.data.begin(), inf.logits.data.end());

    Map2D agn_up;
    const Map2D* agn_ptr = nullptr;
    if (cfg.combine != "off") {
      TensorF features = extract_features(net, s.image);
      GraphF g;
      ParamNodes p = add_params(g, net, false);
      int f = g.input(features, false);
      TensorF agn = g.value(agnostic_forward(g, p, f));
      agn_up = upsample_bilinear(channel_as_map(agn, 0), img_size, img_size);
      agn_ptr = &agn_up;
    }

    for (int c = 0; c < net.cfg.num_classes; ++c) {
      Map2D up = upsample_bilinear(channel_as_map(inf.maps, c), img_size, img_size);
      es.class_maps.push_back(maybe_combine(up, agn_ptr, cfg.combine));
    }
    es.fused_up = maybe_combine(upsample_bilinear(channel_as_map(inf.fused, 0), img_size, img_size),
                                agn_ptr, cfg.combine);
  }

  MetricReport report;
  report.mode = multi ? "multi" : "single";
  report.k = cfg.k;
  report.theta_box = cfg.theta_box;
  report.theta_bg = cfg.theta_bg;

  // Mask metric instances: the fused ground-truth map in single-label mode,
  // one instance per positive class otherwise.
  std::vector<Map2D> inst_maps;
  std::vector<BinaryMask> inst_masks;
  for (const auto& es : ev) {
    if (!multi) {
      inst_maps.push_back(es.fused_up);
      inst_masks.push_back(es.masks[0]);
    } else {
      for (size_t c = 0; c < es.labels.size(); ++c) {
        inst_maps.push_back(es.class_maps[size_t(es.labels[c])]);
        inst_masks.push_back(es.masks[c]);
      }
    }
  }
  std::vector<double> iou_curve;
  report.piou = piou(inst_maps, inst_masks, &iou_curve);
  report.iou_threshold_curve = std::move(iou_curve);
  std::vector<PrPoint> pr;
  report.pxap = pxap(inst_maps, inst_masks, &pr);
  report.pr_curve = std::move(pr);

  std::vector<std::vector<uint8_t>> pred_sem, gt_sem;
  for (const auto& es : ev) {
    pred_sem.push_back(label_map(es.class_maps, cfg.theta_bg));
    gt_sem.push_back(es.gt_sem);
  }
  report.miou = miou(pred_sem, gt_sem, net.cfg.num_classes);

  if (!multi) {
    std::vector<LocSample> loc;
    std::vector<Map2D> fused;
    std::vector<Box> boxes;
    for (const auto& es : ev) {
      loc.push_back({es.logits, es.fused_up, es.labels[0], es.boxes[0]});
      fused.push_back(es.fused_up);
      boxes.push_back(es.boxes[0]);
    }
    LocAccuracies acc = loc_accuracies(loc, cfg.theta_box, 0.5, cfg.strict_iou);
    report.gt_known = acc.gt_known;
    report.top1_loc = acc.top1;
    report.top5_loc = acc.top5;
    report.maxboxaccv2 = maxboxaccv2(fused, boxes, cfg.deltas, cfg.strict_iou);
  }
  return report;
}

}  // namespace bas
