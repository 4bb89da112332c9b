#pragma once

#include <cstdint>
#include <string>

#include "bas/losses.hpp"
#include "bas/model.hpp"
#include "bas/synth_data.hpp"

namespace bas {

struct TrainConfig {
  LossWeights weights;
  double lr_init = 0.05;
  double momentum = 0.9;
  double rho = 0.9;  // poly decay exponent
  double weight_decay = 0.0;
  int epochs = 10;
  int batch_size = 16;
  uint64_t seed = 1;
  std::string mode = "wsol";  // "wsol" | "wsss"
  bool flip = false;          // horizontal flip, p = 0.5
  bool crop = false;          // zero-pad by size/8 then random crop

  void validate() const;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  LossBundle final_epoch_mean;
  int steps = 0;
};

// lr_init * (1 - itr/max_itr)^rho; rejects itr outside [0, max_itr].
double poly_lr(double lr_init, double rho, int itr, int max_itr);

// Classical momentum: v <- momentum*v + g; p <- p - lr*v.
void sgd_momentum_step(TensorF& param, const TensorF& grad, TensorF& velocity, double lr,
                       double momentum);

// Deterministic optimization loop. Per step the batch gradient is the mean
// over samples accumulated sequentially in a fixed order; the per-step CSV
// log (step,lr,l_cls,l_frg,l_ac,l_bas,total) and an end-of-epoch checkpoint
// land in out_dir. WSSS mode draws one foreground class per sample and
// records the draws in wsss_draws.csv.
TrainResult train(BasNet& net, const Manifest& data, const TrainConfig& cfg,
                  const std::string& out_dir);

}  // namespace bas
