#include "bas/explore.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bas {

BinaryMask morph_mask(const BinaryMask& gt, int n) {
  if (n == 0) return gt;
  const int side = 5 * std::abs(n);
  const int anchor = side / 2;
  const int lo = -anchor, hi = side - 1 - anchor;
  BinaryMask out(gt.h, gt.w);
  if (n > 0) {
    // Dilation: a pixel is set if any covered pixel is set.
    for (int y = 0; y < gt.h; ++y)
      for (int x = 0; x < gt.w; ++x) {
        uint8_t v = 0;
        for (int dy = lo; dy <= hi && !v; ++dy) {
          int sy = y + dy;
          if (sy < 0 || sy >= gt.h) continue;
          for (int dx = lo; dx <= hi; ++dx) {
            int sx = x + dx;
            if (sx < 0 || sx >= gt.w) continue;
            if (gt.at(sy, sx)) {
              v = 1;
              break;
            }
          }
        }
        out.at(y, x) = v;
      }
  } else {
    // Erosion with zero padding: the window must lie fully inside the mask,
    // so anything within reach of the border erodes away.
    for (int y = 0; y < gt.h; ++y)
      for (int x = 0; x < gt.w; ++x) {
        uint8_t v = 1;
        for (int dy = lo; dy <= hi && v; ++dy) {
          int sy = y + dy;
          for (int dx = lo; dx <= hi; ++dx) {
            int sx = x + dx;
            if (sy < 0 || sy >= gt.h || sx < 0 || sx >= gt.w || !gt.at(sy, sx)) {
              v = 0;
              break;
            }
          }
        }
        out.at(y, x) = v;
      }
  }
  return out;
}

namespace {

// Area-average to feature resolution, then binarize at 0.5.
TensorF downsample_mask(const BinaryMask& m, int fh, int fw) {
  TensorF out({1, fh, fw});
  const double sy = double(m.h) / fh, sx = double(m.w) / fw;
  for (int y = 0; y < fh; ++y)
    for (int x = 0; x < fw; ++x) {
      int y0 = int(std::floor(y * sy)), y1 = int(std::ceil((y + 1) * sy));
      int x0 = int(std::floor(x * sx)), x1 = int(std::ceil((x + 1) * sx));
      y1 = std::min(y1, m.h);
      x1 = std::min(x1, m.w);
      long long set = 0, tot = 0;
      for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) {
          set += m.at(yy, xx);
          ++tot;
        }
      out.data[size_t(y) * fw + x] = (tot > 0 && 2 * set >= tot) ? 1.f : 0.f;
    }
  return out;
}

struct MaskedReadout {
  double entropy = 0;
  double activation = 0;      // ReLU'd ground-truth-class logit
  double bkg_activation = 0;  // same for the complement mask
};

MaskedReadout masked_readout(GraphF& g, const ModelConfig& cfg, const ParamNodes& p, int features,
                             const TensorF& mask_feat, int gt_class) {
  MaskedReadout r;
  int mask = g.input(mask_feat, false);
  int masked = g.mask_mul(features, mask);
  int y = g.gap(f2_forward(g, cfg, p, masked, false));
  r.entropy = double(g.value(g.softmax_cross_entropy(y, gt_class)).data[0]);
  r.activation = double(g.value(g.relu(g.select(y, gt_class))).data[0]);

  int cmask = g.complement(mask);
  int cmasked = g.mask_mul(features, cmask);
  int yb = g.gap(f2_forward(g, cfg, p, cmasked, false));
  r.bkg_activation = double(g.value(g.relu(g.select(yb, gt_class))).data[0]);
  return r;
}

}  // namespace

SampleCurve curve_for_sample(const BasNet& net, const TensorF& image, const BinaryMask& gt_mask,
                             int gt_class, int sample_id, const std::vector<int>& n_range,
                             double eps) {
  SampleCurve out;
  out.sample_id = sample_id;
  const size_t gt_area = gt_mask.area();
  if (gt_area == 0) {
    out.skipped = true;
    return out;
  }

  GraphF g;
  ParamNodes p = add_params(g, net, false);
  int img = g.input(image, false);
  int features = f1_forward(g, net.cfg, p, img);
  const int fh = g.value(features).shape[1], fw = g.value(features).shape[2];

  // Full-image activation normalizes everything; a full-ones mask reproduces
  // the unmasked pipeline bit for bit.
  TensorF ones = TensorF::full({1, fh, fw}, 1.f);
  MaskedReadout full = masked_readout(g, net.cfg, p, features, ones, gt_class);
  if (!(full.activation > eps)) {
    out.skipped = true;
    return out;
  }

  for (int n : n_range) {
    BinaryMask m = morph_mask(gt_mask, n);
    if (m.area() == 0) {
      ++out.omitted_points;
      continue;
    }
    TensorF mask_feat = downsample_mask(m, fh, fw);
    MaskedReadout r = masked_readout(g, net.cfg, p, features, mask_feat, gt_class);
    CurvePoint pt;
    pt.n = n;
    pt.area_ratio = double(m.area()) / double(gt_area);
    pt.entropy = r.entropy;
    pt.activation_norm = r.activation / full.activation;
    pt.bkg_activation_norm = r.bkg_activation / full.activation;
    out.points.push_back(pt);
  }
  return out;
}

AggregateCurves aggregate_curves(const std::vector<SampleCurve>& curves, int num_bins, double lo,
                                 double hi) {
  if (num_bins < 1 || hi <= lo) throw std::invalid_argument("aggregate_curves: bad bin layout");
  AggregateCurves agg;
  const double width = (hi - lo) / num_bins;
  struct Acc {
    std::vector<double> e, a, b;
  };
  std::vector<Acc> acc(static_cast<size_t>(num_bins));
  for (const auto& c : curves) {
    if (c.skipped) {
      ++agg.samples_skipped;
      continue;
    }
    ++agg.samples_used;
    for (const auto& pt : c.points) {
      if (pt.area_ratio < lo || pt.area_ratio >= hi) continue;
      int bin = int((pt.area_ratio - lo) / width);
      bin = std::min(bin, num_bins - 1);
      acc[size_t(bin)].e.push_back(pt.entropy);
      acc[size_t(bin)].a.push_back(pt.activation_norm);
      acc[size_t(bin)].b.push_back(pt.bkg_activation_norm);
    }
  }
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0;
    sd = 0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= double(v.size());
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / double(v.size()));
  };
  for (int i = 0; i < num_bins; ++i) {
    AggregateBin b;
    b.center = lo + (i + 0.5) * width;
    b.count = int(acc[size_t(i)].e.size());
    b.low_count = b.count < 5;
    mean_std(acc[size_t(i)].e, b.entropy_mean, b.entropy_std);
    mean_std(acc[size_t(i)].a, b.activation_mean, b.activation_std);
    mean_std(acc[size_t(i)].b, b.bkg_activation_mean, b.bkg_activation_std);
    agg.bins.push_back(b);
  }
  return agg;
}

std::vector<int> default_n_range() {
  std::vector<int> r;
  for (int n = -4; n <= 8; ++n) r.push_back(n);
  return r;
}

void write_sample_curves_csv(const std::string& path, const std::vector<SampleCurve>& curves) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("explore: cannot write " + path);
  os << "sample_id,n,area_ratio,entropy,activation_norm,bkg_activation_norm\n";
  char buf[160];
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g\n", c.sample_id, p.n, p.area_ratio,
                    p.entropy, p.activation_norm, p.bkg_activation_norm);
      os << buf;
    }
}

void write_aggregate_csv(const std::string& path, const AggregateCurves& agg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("explore: cannot write " + path);
  os << "bin_center,quantity,mean,std,count\n";
  char buf[160];
  for (const auto& b : agg.bins) {
    std::snprintf(buf, sizeof buf, "%.9g,entropy,%.9g,%.9g,%d\n", b.center, b.entropy_mean,
                  b.entropy_std, b.count);
    os << buf;
    std::snprintf(buf, sizeof buf, "%.9g,activation,%.9g,%.9g,%d\n", b.center, b.activation_mean,
                  b.activation_std, b.count);
    os << buf;
    std::snprintf(buf, sizeof buf, "%.9g,bkg_activation,%.9g,%.9g,%d\n", b.center,
                  b.bkg_activation_mean, b.bkg_activation_std, b.count);
    os << buf;
  }
}

}  // namespace bas
