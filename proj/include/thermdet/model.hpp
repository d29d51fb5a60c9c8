#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "thermdet/attention.hpp"
#include "thermdet/conv_blocks.hpp"
#include "thermdet/detection.hpp"
#include "thermdet/heads.hpp"
#include "thermdet/pyramid.hpp"
#include "thermdet/tensor.hpp"

namespace thermdet {

// Where the per-level window attention sits relative to the Bi-FPN sweep.
enum class RefinePosition { kAfterFusion, kBeforeFusion };

struct ModelConfig {
  int input_size = 64;  // multiple of 32
  int num_classes = 3;
  std::vector<int> widths;  // 5 entries: stem + 4 stages
  std::vector<int> depths;  // 4 entries: bottlenecks per stage
  int ghost_ratio = 2;      // s
  std::vector<int> aspp_rates = {1, 2, 3};
  int aspp_channels = 0;
  int d_model = 0;      // transformer encoder width
  int num_heads = 4;
  int mlp_hidden = 0;   // encoder feed-forward width
  int bifpn_channels = 0;
  int refine_mlp_hidden = 0;
  int window_h = 4, window_w = 4;
  NormKind norm = NormKind::kLayerNorm;
  RefinePosition refine = RefinePosition::kAfterFusion;
  std::string anchors_path;
  float conf_threshold = 0.25f;
  uint64_t seed = 0;

  void validate() const;
};

ModelConfig load_model_config(const std::string& path);

enum class WeightInit { kUniformFanIn, kZero, kOne };

struct WeightEntry {
  std::string name;
  std::vector<int> shape;
  WeightInit init = WeightInit::kUniformFanIn;
  int fan_in = 0;  // for kUniformFanIn
};

// Every learnable tensor of the model, in a fixed deterministic order. The
// analytic parameter count and the allocated model iterate this same list.
std::vector<WeightEntry> weight_manifest(const ModelConfig& cfg);

struct ParamCount {
  int64_t total = 0;
  std::vector<std::pair<std::string, int64_t>> per_module;
};

// Analytic count, no allocation.
ParamCount count_params(const ModelConfig& cfg);

struct Model {
  ModelConfig cfg;
  std::vector<std::pair<std::string, Tensor>> weights;  // manifest order
  AnchorTable anchors;

  const Tensor& weight(const std::string& name) const;
  int64_t total_params() const;
};

// Deterministic seeded init (uniform, fan-in scaled; biases zero).
Model build_model(const ModelConfig& cfg);

// One .tnsr file per weight plus a manifest listing the order.
void save_weights(const Model& model, const std::string& dir);
void load_weights(Model& model, const std::string& dir);

struct ForwardResult {
  std::vector<Detection> detections;             // all levels, level order
  std::array<std::vector<Detection>, 4> per_level;
  std::array<int, 4> level_strides = {4, 8, 16, 32};
};

// backbone -> ASPP + transformer encoder -> Bi-FPN neck with window
// attention -> 4 heads -> decoded detections (pre-fusion).
ForwardResult full_forward(const Tensor& image, const Model& model,
                           const std::string& image_id = "0");

struct BenchStats {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
  double stability = 0;  // p50/p95, in (0,1]
  int runs = 0;
};

BenchStats bench_forward(const ModelConfig& cfg, int n_runs, int image_size);

}  // namespace thermdet
