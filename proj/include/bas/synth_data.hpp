#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bas/tensor.hpp"
#include "bas/types2d.hpp"

namespace bas {

// Deterministic synthetic shapes dataset: one filled shape per positive class
// on a cluttered background, with pixel masks and tight boxes as ground
// truth. Class identity is the shape family (and optionally the fill
// texture); the clutter is drawn from families outside the class set so it is
// class-irrelevant by construction.
struct DatasetSpec {
  int num_classes = 5;
  int train_samples = 500;
  int eval_samples = 100;
  int image_size = 64;
  std::string mode = "single";  // "single" | "multi"
  int objects_min = 2;          // multi-label objects per image
  int objects_max = 3;
  int clutter = 6;              // distractor stroke count
  bool textured = false;        // classes also differ by fill pattern
  bool fine_grained = false;    // all classes share one shape, textures differ
  bool occlusion = false;       // allow overlapping instances
  double min_area_frac = 0.02;
  double max_area_frac = 0.60;
  uint64_t seed = 1;

  void validate() const;
  bool multi_label() const { return mode == "multi"; }
};

int shape_family_count();
int texture_count();

// One manifest entry; paths are relative to the split directory.
struct SampleInfo {
  std::string image_path;
  std::vector<int> labels;
  std::vector<Box> boxes;
  std::vector<std::string> mask_paths;
};

struct Sample {
  TensorF image;  // [3,H,W] in [0,1]
  std::vector<int> labels;
  std::vector<BinaryMask> masks;  // one per positive class, aligned with labels
  std::vector<Box> boxes;
};

struct Manifest {
  std::string root;  // directory holding manifest.json
  std::vector<SampleInfo> entries;
};

// Writes <out_dir>/train and <out_dir>/eval, each with manifest.json,
// images/*.tns and masks/*.pgm. Byte-identical for identical spec+seed.
void generate_dataset(const DatasetSpec& spec, const std::string& out_dir);

Manifest load_manifest(const std::string& split_dir);
Sample load_sample(const Manifest& m, size_t index);

// Semantic labeling of a sample: 0 is background, class c occupies value c+1.
// Instances are disjoint by construction (visible-part masks), so the paint
// order does not matter.
std::vector<uint8_t> semantic_mask(const Sample& s, int image_size);

}  // namespace bas
