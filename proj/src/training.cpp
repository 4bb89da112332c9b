#include "bas/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "bas/checkpoint.hpp"
#include "bas/rng.hpp"

namespace fs = std::filesystem;

namespace bas {

void TrainConfig::validate() const {
  if (lr_init <= 0) throw std::invalid_argument("train: lr_init must be positive");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("train: momentum must be in [0,1)");
  if (rho <= 0) throw std::invalid_argument("train: rho must be positive");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
  if (mode != "wsol" && mode != "wsss")
    throw std::invalid_argument("train: mode must be \"wsol\" or \"wsss\", got \"" + mode + "\"");
  if (weights.alpha < 0 || weights.beta < 0 || weights.lambda < 0 || weights.epsilon < 0)
    throw std::invalid_argument("train: loss weights must be non-negative");
}

double poly_lr(double lr_init, double rho, int itr, int max_itr) {
  if (max_itr < 1) throw std::invalid_argument("poly_lr: max_itr must be positive");
  if (itr < 0 || itr > max_itr)
    throw std::invalid_argument("poly_lr: itr " + std::to_string(itr) + " outside [0, " +
                                std::to_string(max_itr) + "]");
  return lr_init * std::pow(1.0 - double(itr) / double(max_itr), rho);
}

void sgd_momentum_step(TensorF& param, const TensorF& grad, TensorF& velocity, double lr,
                       double momentum) {
  if (!param.same_shape(grad) || !param.same_shape(velocity))
    throw std::invalid_argument("sgd: parameter shape " + param.shape_str() +
                                " does not match gradient shape " + grad.shape_str());
  for (size_t i = 0; i < param.numel(); ++i) {
    float v = float(momentum * double(velocity.data[i]) + double(grad.data[i]));
    velocity.data[i] = v;
    param.data[i] = float(double(param.data[i]) - lr * double(v));
  }
}

namespace {

TensorF flip_horizontal(const TensorF& img) {
  TensorF out(img.shape);
  const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y, w - 1 - x);
  return out;
}

TensorF pad_crop(const TensorF& img, int dy, int dx, int pad) {
  TensorF out(img.shape);
  const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int sy = y + dy - pad, sx = x + dx - pad;
        out.at(ch, y, x) = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? img.at(ch, sy, sx) : 0.f;
      }
  return out;
}

struct CachedSample {
  TensorF image;
  std::vector<int> labels;
};

}  // namespace

TrainResult train(BasNet& net, const Manifest& data, const TrainConfig& cfg,
                  const std::string& out_dir) {
  cfg.validate();
  net.cfg.validate();
  if (data.entries.empty()) throw std::invalid_argument("train: dataset is empty");
  const bool wsss = cfg.mode == "wsss";
  for (const auto& e : data.entries) {
    if (!wsss && e.labels.size() != 1)
      throw std::invalid_argument("train: wsol mode needs single-label data, sample \"" +
                                  e.image_path + "\" has " + std::to_string(e.labels.size()) +
                                  " labels");
    if (e.labels.empty())
      throw std::invalid_argument("train: sample \"" + e.image_path + "\" has no labels");
  }
  fs::create_directories(out_dir);

  std::vector<CachedSample> cache;
  cache.reserve(data.entries.size());
  for (size_t i = 0; i < data.entries.size(); ++i) {
    Sample s = load_sample(data, i);
    cache.push_back({std::move(s.image), std::move(s.labels)});
  }

  std::vector<TensorF*> params;
  net.for_each_param([&](const std::string&, TensorF& t) { params.push_back(&t); });
  std::vector<TensorF> velocity, grad_accum;
  for (auto* p : params) {
    velocity.emplace_back(p->shape);
    grad_accum.emplace_back(p->shape);
  }

  const int n = int(cache.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int max_itr = steps_per_epoch * cfg.epochs;

  std::ofstream log(out_dir + "/train_log.csv");
  if (!log) throw std::runtime_error("train: cannot write log in " + out_dir);
  log << "step,lr,l_cls,l_frg,l_ac,l_bas,total\n";
  std::ofstream draws;
  if (wsss) {
    draws.open(out_dir + "/wsss_draws.csv");
    draws << "step,sample,class\n";
  }
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };

  Rng run_rng(cfg.seed);
  TrainResult result;
  LossBundle epoch_mean;
  int epoch_steps = 0;
  int step = 0;

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;

  const int pad = net.cfg.input_size / 8;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = run_rng.fork(uint64_t(epoch) + 1);
    epoch_rng.shuffle(order);
    epoch_mean = LossBundle{};
    epoch_steps = 0;

    for (int b = 0; b < steps_per_epoch; ++b, ++step) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      const int batch_n = hi - lo;
      for (auto& g : grad_accum) std::fill(g.data.begin(), g.data.end(), 0.f);
      LossBundle batch_mean;

      for (int s = lo; s < hi; ++s) {
        const CachedSample& sample = cache[size_t(order[size_t(s)])];
        TensorF image = sample.image;
        if (cfg.flip && epoch_rng.uniform() < 0.5) image = flip_horizontal(image);
        if (cfg.crop) {
          int dy = epoch_rng.uniform_int(0, 2 * pad);
          int dx = epoch_rng.uniform_int(0, 2 * pad);
          image = pad_crop(image, dy, dx, pad);
        }

        int fg_class = sample.labels[0];
        if (wsss && sample.labels.size() > 1)
          fg_class = sample.labels[size_t(epoch_rng.uniform_int(0, int(sample.labels.size()) - 1))];
        if (wsss) draws << (step + 1) << "," << order[size_t(s)] << "," << fg_class << "\n";

        GraphF g;
        ParamNodes pn = add_params(g, net, true);
        int img = g.input(image, false);
        int feat = f1_forward(g, net.cfg, pn, img);
        AmcNodes amc = amc_forward(g, net.cfg, pn, feat, fg_class, std::nullopt,
                                   /*skip_background=*/cfg.weights.lambda == 0.0,
                                   /*skip_foreground=*/cfg.weights.alpha == 0.0);
        LossNodes ln = wsss ? build_wsss_loss(g, amc, sample.labels, fg_class, cfg.weights)
                            : build_wsol_loss(g, amc, fg_class, cfg.weights);
        int total = ln.total;
        if (net.cfg.agnostic_head && cfg.weights.lambda != 0.0) {
          int agn_map = agnostic_forward(g, pn, feat);
          int agn_bas = build_agnostic_bas(g, net.cfg, pn, feat, agn_map, sample.labels,
                                           cfg.weights, amc.y_full);
          total = g.add(total, g.scale(agn_bas, float(cfg.weights.lambda)));
          if (cfg.weights.beta != 0.0)
            total = g.add(total, g.scale(g.mean_all(agn_map), float(cfg.weights.beta)));
        }

        LossBundle bundle = read_bundle(g, ln);
        bundle.total = double(g.value(total).data[0]);
        if (!std::isfinite(bundle.total))
          throw std::runtime_error("train: non-finite loss at step " + std::to_string(step + 1));

        g.backward(total);
        size_t pi = 0;
        auto pull = [&](int node) {
          if (node >= 0) {
            const TensorF& gr = g.grad(node);
            for (size_t i = 0; i < gr.numel(); ++i) grad_accum[pi].data[i] += gr.data[i];
          }
          ++pi;
        };
        for (int id : pn.trunk) pull(id);
        pull(pn.head_w);
        pull(pn.gen_w);
        pull(pn.gen_b);
        if (net.cfg.agnostic_head) {
          pull(pn.agn_w);
          pull(pn.agn_b);
        }

        batch_mean.l_cls += bundle.l_cls;
        batch_mean.l_frg += bundle.l_frg;
        batch_mean.l_ac += bundle.l_ac;
        batch_mean.l_bas += bundle.l_bas;
        batch_mean.total += bundle.total;
      }

      const float inv = 1.f / float(batch_n);
      const double lr = poly_lr(cfg.lr_init, cfg.rho, step, max_itr);
      for (size_t pi = 0; pi < params.size(); ++pi) {
        for (auto& v : grad_accum[pi].data) v *= inv;
        if (cfg.weight_decay != 0.0)
          for (size_t i = 0; i < grad_accum[pi].numel(); ++i)
            grad_accum[pi].data[i] += float(cfg.weight_decay * double(params[pi]->data[i]));
        sgd_momentum_step(*params[pi], grad_accum[pi], velocity[pi], lr, cfg.momentum);
      }

      batch_mean.l_cls /= batch_n;
      batch_mean.l_frg /= batch_n;
      batch_mean.l_ac /= batch_n;
      batch_mean.l_bas /= batch_n;
      batch_mean.total /= batch_n;
      log << (step + 1) << "," << fmt(lr) << "," << fmt(batch_mean.l_cls) << ","
          << fmt(batch_mean.l_frg) << "," << fmt(batch_mean.l_ac) << "," << fmt(batch_mean.l_bas)
          << "," << fmt(batch_mean.total) << "\n";

      epoch_mean.l_cls += batch_mean.l_cls;
      epoch_mean.l_frg += batch_mean.l_frg;
      epoch_mean.l_ac += batch_mean.l_ac;
      epoch_mean.l_bas += batch_mean.l_bas;
      epoch_mean.total += batch_mean.total;
      ++epoch_steps;
    }

    char name[48];
    std::snprintf(name, sizeof name, "checkpoint_ep%03d.bas", epoch + 1);
    save_checkpoint(out_dir + "/" + name, net);
  }

  epoch_mean.l_cls /= epoch_steps;
  epoch_mean.l_frg /= epoch_steps;
  epoch_mean.l_ac /= epoch_steps;
  epoch_mean.l_bas /= epoch_steps;
  epoch_mean.total /= epoch_steps;

  result.checkpoint_path = out_dir + "/checkpoint.bas";
  save_checkpoint(result.checkpoint_path, net);
  result.log_path = out_dir + "/train_log.csv";
  result.final_epoch_mean = epoch_mean;
  result.steps = step;
  return result;
}

}  // namespace bas
