#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bas/evaluate.hpp"
#include "bas/model.hpp"
#include "bas/synth_data.hpp"
#include "bas/training.hpp"

namespace bas {

struct ExploreConfig {
  int n_min = -4, n_max = 8;
  int bins = 20;
  std::string split = "eval";
};

struct SearchConfig {
  int grid = 256;
  std::string split = "eval";
};

// One flat schema shared by every command; a config file fills part of it and
// dotted-key overrides (train.epochs=20) patch the rest. Unset fields fall
// back to cross-section defaults: the model inherits the dataset's class
// count and image size, beta follows alpha + lambda, and the per-section
// seeds follow the run seed.
struct RunConfig {
  uint64_t seed = 1;
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  ExploreConfig explore;
  SearchConfig search;
};

RunConfig load_run_config(const std::optional<std::string>& config_path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_flag);

// Snapshot of the fully resolved configuration, written next to every
// command's outputs.
std::string run_config_json(const RunConfig& cfg);

}  // namespace bas
