#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "thermdet/eval.hpp"
#include "thermdet/tensor.hpp"

namespace thermdet {

struct SceneSpec {
  int width = 64, height = 64;
  int n_objects = 3;
  int num_classes = 3;
  float noise_sigma = 0.03f;
  uint64_t seed = 0;
  // background gradient endpoints (diagonal ramp) and object contrast
  float background_low = 0.2f;
  float background_high = 0.45f;
  float contrast = 0.3f;
  int min_object = 3;
  int max_object = 14;
  float max_overlap_iou = 0.0f;  // placement budget between object boxes
};

struct ThermalScene {
  Tensor image;  // (1,h,w), values in [0,1]
  std::vector<GroundTruth> objects;
  float noise_level = 0.0f;
  float background_low = 0.0f, background_high = 0.0f;
  uint64_t rng_seed = 0;
};

// Deterministic in spec+seed: gradient background, rectangular warm objects,
// additive Gaussian noise, clipped to [0,1]. Labels are exact by construction.
// Throws if objects cannot be placed within the overlap budget.
ThermalScene generate_scene(const SceneSpec& spec);

enum class AugmentOp {
  kResize067,
  kResize085,
  kRot90,
  kRot180,
  kRot270,
  kFlipH,
  kFlipV,
};

struct Augmented {
  Tensor image;
  std::vector<GroundTruth> labels;
};

// Applies the same geometric transform to pixels and boxes. Resizes use
// bilinear sampling and round target dims to multiples of 32 (minimum 32).
Augmented augment(const Tensor& image, const std::vector<GroundTruth>& labels,
                  AugmentOp op);

// Binary PGM (P5), maxval 255 or 65535; values map to [0,1]. Saving always
// writes 16-bit so save -> load round-trips losslessly.
Tensor load_pgm(const std::string& path);
void save_pgm(const Tensor& image, const std::string& path);
std::pair<int, int> pgm_dims(const std::string& path);  // (w, h)

// Writes count scenes plus YOLO labels and a manifest to out_dir; returns the
// manifest path. Seeds are base_seed, base_seed+1, ...
std::string generate_corpus(const SceneSpec& base, int count,
                            const std::string& out_dir);

}  // namespace thermdet
