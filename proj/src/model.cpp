#include "thermdet/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace thermdet {

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("ModelConfig." + field + ": " + why);
  };
  if (input_size <= 0 || input_size % 32 != 0) fail("input_size", "must be a positive multiple of 32");
  if (num_classes <= 0) fail("num_classes", "must be positive");
  if (widths.size() != 5) fail("widths", "expected 5 entries (stem + 4 stages)");
  if (depths.size() != 4) fail("depths", "expected 4 entries");
  if (ghost_ratio < 1) fail("ghost_ratio", "must be >= 1");
  for (size_t i = 1; i < widths.size(); ++i)
    if (widths[i] % ghost_ratio != 0) fail("widths", "stage widths must be divisible by ghost_ratio");
  for (int w : widths)
    if (w <= 0) fail("widths", "must be positive");
  for (int d : depths)
    if (d < 0) fail("depths", "must be nonnegative");
  if (aspp_channels <= 0) fail("aspp_channels", "must be positive");
  if (d_model <= 0 || d_model % num_heads != 0) fail("d_model", "must be a positive multiple of num_heads");
  if (mlp_hidden <= 0) fail("mlp_hidden", "must be positive");
  if (bifpn_channels <= 0 || bifpn_channels % num_heads != 0)
    fail("bifpn_channels", "must be a positive multiple of num_heads");
  if (refine_mlp_hidden <= 0) fail("refine_mlp_hidden", "must be positive");
  if (window_h <= 0 || window_w <= 0) fail("window", "must be positive");
  if (anchors_path.empty()) fail("anchors", "path required");
  AsppSpec{widths[4], aspp_channels, aspp_rates}.validate();
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  ModelConfig cfg;
  cfg.widths.clear();
  cfg.depths.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::istringstream key_ss(line.substr(0, eq));
    std::string key;
    key_ss >> key;
    std::istringstream val(line.substr(eq + 1));
    auto parse_ints = [&](std::vector<int>& out) {
      out.clear();
      int v;
      while (val >> v) out.push_back(v);
    };
    if (key == "input_size") val >> cfg.input_size;
    else if (key == "num_classes") val >> cfg.num_classes;
    else if (key == "widths") parse_ints(cfg.widths);
    else if (key == "depths") parse_ints(cfg.depths);
    else if (key == "ghost_ratio") val >> cfg.ghost_ratio;
    else if (key == "aspp_rates") parse_ints(cfg.aspp_rates);
    else if (key == "aspp_channels") val >> cfg.aspp_channels;
    else if (key == "d_model") val >> cfg.d_model;
    else if (key == "num_heads") val >> cfg.num_heads;
    else if (key == "mlp_hidden") val >> cfg.mlp_hidden;
    else if (key == "bifpn_channels") val >> cfg.bifpn_channels;
    else if (key == "refine_mlp_hidden") val >> cfg.refine_mlp_hidden;
    else if (key == "window") { val >> cfg.window_h >> cfg.window_w; }
    else if (key == "anchors") val >> cfg.anchors_path;
    else if (key == "conf_threshold") val >> cfg.conf_threshold;
    else if (key == "seed") val >> cfg.seed;
    else if (key == "norm") {
      std::string v;
      val >> v;
      if (v == "layer_norm") cfg.norm = NormKind::kLayerNorm;
      else if (v == "linear") cfg.norm = NormKind::kLinear;
      else throw std::runtime_error("config: unknown norm kind '" + v + "'");
    } else if (key == "refine") {
      std::string v;
      val >> v;
      if (v == "after") cfg.refine = RefinePosition::kAfterFusion;
      else if (v == "before") cfg.refine = RefinePosition::kBeforeFusion;
      else throw std::runtime_error("config: unknown refine position '" + v + "'");
    } else {
      std::ostringstream err;
      err << "config " << path << ": unknown key '" << key << "' at line " << line_no;
      throw std::runtime_error(err.str());
    }
  }
  // anchor path is relative to the config file
  if (!cfg.anchors_path.empty() && cfg.anchors_path.front() != '/') {
    cfg.anchors_path =
        (std::filesystem::path(path).parent_path() / cfg.anchors_path).string();
  }
  cfg.validate();
  return cfg;
}

namespace {

struct ManifestBuilder {
  std::vector<WeightEntry> entries;

  void tensor(const std::string& name, std::vector<int> shape, int fan_in) {
    entries.push_back({name, std::move(shape), WeightInit::kUniformFanIn, fan_in});
  }
  void zeros(const std::string& name, std::vector<int> shape) {
    entries.push_back({name, std::move(shape), WeightInit::kZero, 0});
  }
  void ones(const std::string& name, std::vector<int> shape) {
    entries.push_back({name, std::move(shape), WeightInit::kOne, 0});
  }

  void ghost(const std::string& prefix, const GhostConvSpec& spec) {
    const int m = spec.primary_out, s = spec.ratio();
    const int k = spec.primary_kernel, d = spec.cheap_kernel;
    tensor(prefix + ".primary", {m, spec.in_channels, k, k}, spec.in_channels * k * k);
    zeros(prefix + ".primary_bias", {m});
    if (s > 1) {
      tensor(prefix + ".cheap", {m * (s - 1), 1, d, d}, d * d);
      zeros(prefix + ".cheap_bias", {m * (s - 1)});
    }
  }

  void norm_pair(const std::string& prefix, NormKind kind, int d) {
    if (kind == NormKind::kLayerNorm) {
      ones(prefix + ".gamma", {d});
      zeros(prefix + ".beta", {d});
    } else {
      tensor(prefix + ".w", {d, d}, d);
      zeros(prefix + ".b", {d});
    }
  }

  void mha(const std::string& prefix, int d) {
    tensor(prefix + ".wq", {d, d}, d);
    tensor(prefix + ".wk", {d, d}, d);
    tensor(prefix + ".wv", {d, d}, d);
    tensor(prefix + ".wo", {d, d}, d);
  }
};

GhostConvSpec down_spec(const ModelConfig& cfg, int cin, int cout) {
  return {cin, cout / cfg.ghost_ratio, cout, 3, 3, 2, 1};
}

GhostConvSpec keep_spec(const ModelConfig& cfg, int ch) {
  return {ch, ch / cfg.ghost_ratio, ch, 3, 3, 1, 1};
}

}  // namespace

std::vector<WeightEntry> weight_manifest(const ModelConfig& cfg) {
  cfg.validate();
  ManifestBuilder b;
  const auto& w = cfg.widths;

  b.tensor("stem.filters", {w[0], 1, 3, 3}, 9);
  b.zeros("stem.bias", {w[0]});

  for (int stage = 1; stage <= 4; ++stage) {
    const std::string p = "stage" + std::to_string(stage);
    b.ghost(p + ".down", down_spec(cfg, w[static_cast<size_t>(stage) - 1],
                                   w[static_cast<size_t>(stage)]));
    for (int blk = 0; blk < cfg.depths[static_cast<size_t>(stage) - 1]; ++blk) {
      const std::string bp = p + ".block" + std::to_string(blk);
      b.ghost(bp + ".expand", keep_spec(cfg, w[static_cast<size_t>(stage)]));
      b.ghost(bp + ".project", keep_spec(cfg, w[static_cast<size_t>(stage)]));
    }
  }

  for (size_t r = 0; r < cfg.aspp_rates.size(); ++r) {
    const std::string p = "aspp.branch" + std::to_string(cfg.aspp_rates[r]);
    b.tensor(p + ".filters", {cfg.aspp_channels, w[4], 3, 3}, w[4] * 9);
    b.zeros(p + ".bias", {cfg.aspp_channels});
  }
  const int aspp_cat = static_cast<int>(cfg.aspp_rates.size()) * cfg.aspp_channels;
  b.tensor("aspp.proj.filters", {cfg.aspp_channels, aspp_cat, 1, 1}, aspp_cat);
  b.zeros("aspp.proj.bias", {cfg.aspp_channels});

  const int fuse_in = w[4] + cfg.aspp_channels;
  b.tensor("encoder.fuse.filters", {cfg.d_model, fuse_in, 1, 1}, fuse_in);
  b.zeros("encoder.fuse.bias", {cfg.d_model});
  b.mha("encoder.attn", cfg.d_model);
  b.tensor("encoder.ff.w1", {cfg.d_model, cfg.mlp_hidden}, cfg.d_model);
  b.zeros("encoder.ff.b1", {cfg.mlp_hidden});
  b.tensor("encoder.ff.w2", {cfg.mlp_hidden, cfg.d_model}, cfg.mlp_hidden);
  b.zeros("encoder.ff.b2", {cfg.d_model});

  const int lateral_in[4] = {w[1], w[2], w[3], cfg.d_model};
  for (int l = 0; l < 4; ++l) {
    const std::string p = "lateral" + std::to_string(l);
    b.tensor(p + ".filters", {cfg.bifpn_channels, lateral_in[l], 1, 1}, lateral_in[l]);
    b.zeros(p + ".bias", {cfg.bifpn_channels});
  }

  const int node_inputs[6] = {2, 2, 2, 3, 3, 2};
  for (int n = 0; n < 6; ++n) {
    const std::string p = "bifpn.node" + std::to_string(n);
    b.ones(p + ".w", {node_inputs[n]});
    b.tensor(p + ".conv.filters", {cfg.bifpn_channels, cfg.bifpn_channels, 3, 3},
             cfg.bifpn_channels * 9);
    b.zeros(p + ".conv.bias", {cfg.bifpn_channels});
  }

  for (int l = 0; l < 4; ++l) {
    const std::string p = "refine" + std::to_string(l);
    b.norm_pair(p + ".norm1", cfg.norm, cfg.bifpn_channels);
    b.mha(p + ".attn", cfg.bifpn_channels);
    b.norm_pair(p + ".norm2", cfg.norm, cfg.bifpn_channels);
    b.tensor(p + ".mlp.w1", {cfg.bifpn_channels, cfg.refine_mlp_hidden}, cfg.bifpn_channels);
    b.zeros(p + ".mlp.b1", {cfg.refine_mlp_hidden});
    b.tensor(p + ".mlp.w2", {cfg.refine_mlp_hidden, cfg.bifpn_channels}, cfg.refine_mlp_hidden);
    b.zeros(p + ".mlp.b2", {cfg.bifpn_channels});
  }

  const int head_out = 3 * (5 + cfg.num_classes);
  for (int l = 0; l < 4; ++l) {
    const std::string p = "head" + std::to_string(l);
    b.tensor(p + ".filters", {head_out, cfg.bifpn_channels, 1, 1}, cfg.bifpn_channels);
    b.zeros(p + ".bias", {head_out});
  }
  return b.entries;
}

ParamCount count_params(const ModelConfig& cfg) {
  ParamCount count;
  std::vector<std::pair<std::string, int64_t>> modules;
  for (const auto& entry : weight_manifest(cfg)) {
    const int64_t n = shape_numel(entry.shape);
    count.total += n;
    const std::string module = entry.name.substr(0, entry.name.find('.'));
    if (!modules.empty() && modules.back().first == module)
      modules.back().second += n;
    else
      modules.emplace_back(module, n);
  }
  count.per_module = std::move(modules);
  return count;
}

const Tensor& Model::weight(const std::string& name) const {
  for (const auto& [n, t] : weights)
    if (n == name) return t;
  throw std::runtime_error("model: no weight named " + name);
}

int64_t Model::total_params() const {
  int64_t n = 0;
  for (const auto& [name, t] : weights) n += t.size();
  return n;
}

Model build_model(const ModelConfig& cfg) {
  Model model;
  model.cfg = cfg;
  model.anchors = load_anchor_table(cfg.anchors_path);
  std::mt19937_64 rng(cfg.seed);
  for (const auto& entry : weight_manifest(cfg)) {
    Tensor t(entry.shape);
    switch (entry.init) {
      case WeightInit::kZero:
        break;
      case WeightInit::kOne:
        for (int64_t i = 0; i < t.size(); ++i) t[i] = 1.0f;
        break;
      case WeightInit::kUniformFanIn: {
        const float bound = 1.0f / std::sqrt(static_cast<float>(entry.fan_in));
        std::uniform_real_distribution<float> dist(-bound, bound);
        for (int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
        break;
      }
    }
    model.weights.emplace_back(entry.name, std::move(t));
  }
  return model;
}

void save_weights(const Model& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "weights.txt");
  if (!manifest) throw std::runtime_error("cannot write weight manifest");
  for (const auto& [name, t] : model.weights) {
    manifest << name << '\n';
    save_tensor(t, (fs::path(dir) / (name + ".tnsr")).string());
  }
}

void load_weights(Model& model, const std::string& dir) {
  namespace fs = std::filesystem;
  for (auto& [name, t] : model.weights) {
    Tensor loaded = load_tensor((fs::path(dir) / (name + ".tnsr")).string());
    if (!loaded.same_shape(t))
      throw std::runtime_error("weights: shape mismatch for " + name);
    t = std::move(loaded);
  }
}

namespace {

Tensor ghost_forward(const Model& m, const std::string& prefix,
                     const GhostConvSpec& spec, const Tensor& x) {
  const bool cheap = spec.ratio() > 1;
  return ghost_conv(x, spec, m.weight(prefix + ".primary"),
                    m.weight(prefix + ".primary_bias"),
                    cheap ? m.weight(prefix + ".cheap") : Tensor{},
                    cheap ? m.weight(prefix + ".cheap_bias") : Tensor{});
}

WindowAttentionWeights refine_weights(const Model& m, int level) {
  const std::string p = "refine" + std::to_string(level);
  WindowAttentionWeights w;
  if (m.cfg.norm == NormKind::kLayerNorm) {
    w.norm1_gamma = m.weight(p + ".norm1.gamma");
    w.norm1_beta = m.weight(p + ".norm1.beta");
    w.norm2_gamma = m.weight(p + ".norm2.gamma");
    w.norm2_beta = m.weight(p + ".norm2.beta");
  } else {
    w.norm1_w = m.weight(p + ".norm1.w");
    w.norm1_b = m.weight(p + ".norm1.b");
    w.norm2_w = m.weight(p + ".norm2.w");
    w.norm2_b = m.weight(p + ".norm2.b");
  }
  w.attn = {m.weight(p + ".attn.wq"), m.weight(p + ".attn.wk"),
            m.weight(p + ".attn.wv"), m.weight(p + ".attn.wo")};
  w.mlp_w1 = m.weight(p + ".mlp.w1");
  w.mlp_b1 = m.weight(p + ".mlp.b1");
  w.mlp_w2 = m.weight(p + ".mlp.w2");
  w.mlp_b2 = m.weight(p + ".mlp.b2");
  return w;
}

}  // namespace

ForwardResult full_forward(const Tensor& image, const Model& model,
                           const std::string& image_id) {
  const ModelConfig& cfg = model.cfg;
  if (image.rank() != 3 || image.dim(0) != 1)
    throw std::invalid_argument("full_forward: image must be (1,h,w)");
  if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0)
    throw std::invalid_argument("full_forward: image dims must be multiples of 32");
  const auto& w = cfg.widths;

  Tensor x = gelu(conv2d(image, model.weight("stem.filters"), model.weight("stem.bias"), 2, 1));
  std::vector<Tensor> stage_out;
  for (int stage = 1; stage <= 4; ++stage) {
    const std::string p = "stage" + std::to_string(stage);
    x = gelu(ghost_forward(model, p + ".down",
                           down_spec(cfg, w[static_cast<size_t>(stage) - 1],
                                     w[static_cast<size_t>(stage)]), x));
    const GhostConvSpec ks = keep_spec(cfg, w[static_cast<size_t>(stage)]);
    for (int blk = 0; blk < cfg.depths[static_cast<size_t>(stage) - 1]; ++blk) {
      const std::string bp = p + ".block" + std::to_string(blk);
      GhostBottleneckWeights bw;
      bw.expand_primary = model.weight(bp + ".expand.primary");
      bw.expand_primary_bias = model.weight(bp + ".expand.primary_bias");
      bw.project_primary = model.weight(bp + ".project.primary");
      bw.project_primary_bias = model.weight(bp + ".project.primary_bias");
      if (ks.ratio() > 1) {
        bw.expand_cheap = model.weight(bp + ".expand.cheap");
        bw.expand_cheap_bias = model.weight(bp + ".expand.cheap_bias");
        bw.project_cheap = model.weight(bp + ".project.cheap");
        bw.project_cheap_bias = model.weight(bp + ".project.cheap_bias");
      }
      x = ghost_bottleneck(x, ks, ks, bw, true);
    }
    stage_out.push_back(x);
  }

  AsppSpec aspp_spec{w[4], cfg.aspp_channels, cfg.aspp_rates};
  std::vector<Tensor> branch_filters, branch_biases;
  for (int rate : cfg.aspp_rates) {
    branch_filters.push_back(model.weight("aspp.branch" + std::to_string(rate) + ".filters"));
    branch_biases.push_back(model.weight("aspp.branch" + std::to_string(rate) + ".bias"));
  }
  Tensor aspp_out = aspp(stage_out[3], aspp_spec, branch_filters, branch_biases,
                         model.weight("aspp.proj.filters"), model.weight("aspp.proj.bias"));

  AttentionSpec enc_spec{cfg.d_model, cfg.num_heads, cfg.mlp_hidden, cfg.norm};
  TransformerEncoderWeights enc;
  enc.fuse_filters = model.weight("encoder.fuse.filters");
  enc.fuse_bias = model.weight("encoder.fuse.bias");
  enc.attn = {model.weight("encoder.attn.wq"), model.weight("encoder.attn.wk"),
              model.weight("encoder.attn.wv"), model.weight("encoder.attn.wo")};
  enc.ff_w1 = model.weight("encoder.ff.w1");
  enc.ff_b1 = model.weight("encoder.ff.b1");
  enc.ff_w2 = model.weight("encoder.ff.w2");
  enc.ff_b2 = model.weight("encoder.ff.b2");
  FeatureMap encoded = transformer_encoder({stage_out[3], 32}, {aspp_out, 32}, enc_spec, enc);

  PyramidLevels pyramid;
  const Tensor* level_src[4] = {&stage_out[0], &stage_out[1], &stage_out[2], &encoded.map};
  const int strides[4] = {4, 8, 16, 32};
  for (int l = 0; l < 4; ++l) {
    const std::string p = "lateral" + std::to_string(l);
    pyramid.levels.push_back(
        {conv2d(*level_src[l], model.weight(p + ".filters"), model.weight(p + ".bias"), 1, 0),
         strides[l]});
  }

  AttentionSpec wa_spec{cfg.bifpn_channels, cfg.num_heads, cfg.refine_mlp_hidden, cfg.norm};
  std::vector<WindowAttentionWeights> wa;
  for (int l = 0; l < 4; ++l) wa.push_back(refine_weights(model, l));

  if (cfg.refine == RefinePosition::kBeforeFusion)
    pyramid = neck_refine(pyramid, wa, wa_spec, cfg.window_h, cfg.window_w);

  BifpnWeights bifpn;
  for (int n = 0; n < 6; ++n) {
    const std::string p = "bifpn.node" + std::to_string(n);
    const Tensor& raw = model.weight(p + ".w");
    bifpn.nodes[static_cast<size_t>(n)].weights.raw.assign(raw.data(), raw.data() + raw.size());
    bifpn.nodes[static_cast<size_t>(n)].conv_filters = model.weight(p + ".conv.filters");
    bifpn.nodes[static_cast<size_t>(n)].conv_bias = model.weight(p + ".conv.bias");
  }
  pyramid = bifpn_pass(pyramid, bifpn);

  if (cfg.refine == RefinePosition::kAfterFusion)
    pyramid = neck_refine(pyramid, wa, wa_spec, cfg.window_h, cfg.window_w);

  ForwardResult result;
  const int img_h = image.dim(1), img_w = image.dim(2);
  for (int l = 0; l < 4; ++l) {
    const std::string p = "head" + std::to_string(l);
    RawPrediction raw = head_forward(pyramid.levels[static_cast<size_t>(l)],
                                     model.weight(p + ".filters"), model.weight(p + ".bias"),
                                     3, cfg.num_classes);
    result.per_level[static_cast<size_t>(l)] =
        decode(raw, model.anchors.for_stride(strides[l]), img_w, img_h,
               cfg.conf_threshold, image_id);
    result.detections.insert(result.detections.end(),
                             result.per_level[static_cast<size_t>(l)].begin(),
                             result.per_level[static_cast<size_t>(l)].end());
  }
  return result;
}

BenchStats bench_forward(const ModelConfig& cfg, int n_runs, int image_size) {
  if (n_runs < 10) throw std::invalid_argument("bench_forward: n_runs must be >= 10");
  if (image_size % 32 != 0) throw std::invalid_argument("bench_forward: size must be a multiple of 32");
  Model model = build_model(cfg);

  Tensor image({1, image_size, image_size});
  for (int64_t i = 0; i < image.size(); ++i)
    image[i] = static_cast<float>(i % 251) / 251.0f;  // deterministic input

  const int warmup = 3;
  std::vector<double> times;
  for (int run = 0; run < warmup + n_runs; ++run) {
    const auto start = std::chrono::steady_clock::now();
    ForwardResult r = full_forward(image, model);
    const auto stop = std::chrono::steady_clock::now();
    (void)r;
    if (run >= warmup)
      times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::sort(times.begin(), times.end());
  BenchStats stats;
  stats.runs = n_runs;
  for (double t : times) stats.mean_ms += t;
  stats.mean_ms /= static_cast<double>(times.size());
  stats.p50_ms = times[times.size() / 2];
  stats.p95_ms = times[static_cast<size_t>(std::min<double>(
      static_cast<double>(times.size()) - 1, std::ceil(0.95 * times.size())))];
  stats.stability = stats.p50_ms / stats.p95_ms;
  return stats;
}

}  // namespace thermdet
