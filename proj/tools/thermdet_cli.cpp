// Command-line front end: synthetic data generation, inference, box fusion,
// evaluation, gradient checking and micro-benchmarks.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
// violation.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "thermdet/box_fusion.hpp"
#include "thermdet/data.hpp"
#include "thermdet/detection.hpp"
#include "thermdet/eval.hpp"
#include "thermdet/grad.hpp"
#include "thermdet/model.hpp"
#include "thermdet/tensor.hpp"

namespace fs = std::filesystem;
using namespace thermdet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

int cmd_generate(int count, int size, uint64_t seed, int objects, int classes,
                 float noise, const std::string& out_dir) {
  SceneSpec spec;
  spec.width = spec.height = size;
  spec.n_objects = objects;
  spec.num_classes = classes;
  spec.noise_sigma = noise;
  spec.seed = seed;
  const std::string manifest = generate_corpus(spec, count, out_dir);
  std::cout << "wrote " << count << " scenes, manifest: " << manifest << "\n";
  return kExitOk;
}

int cmd_infer(const std::string& config_path, const std::string& weights_dir,
              const std::string& images_manifest, const std::string& out_path) {
  ModelConfig cfg = load_model_config(config_path);
  Model model = build_model(cfg);
  if (!weights_dir.empty()) load_weights(model, weights_dir);

  std::ifstream manifest(images_manifest);
  if (!manifest)
    throw std::runtime_error("cannot open image manifest: " + images_manifest);
  const fs::path base = fs::path(images_manifest).parent_path();

  std::vector<Detection> all;
  std::string line;
  int n_images = 0;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string image_rel;
    ss >> image_rel;  // a trailing label path, if present, is ignored here
    const fs::path image_path = base / image_rel;
    Tensor image = load_pgm(image_path.string());
    const std::string image_id = image_path.stem().string();
    ForwardResult result = full_forward(image, model, image_id);
    all.insert(all.end(), result.detections.begin(), result.detections.end());
    ++n_images;
  }
  write_detections_file(all, out_path);
  std::cout << "inferred " << n_images << " images, " << all.size()
            << " raw detections -> " << out_path << "\n";
  return kExitOk;
}

int cmd_fuse(const std::string& method, float iou_thr, float sigma, float floor,
             const std::string& decay, const std::string& in_path,
             const std::string& out_path) {
  FusionConfig cfg;
  if (method == "nms") cfg.method = FusionMethod::kNms;
  else if (method == "soft_nms") cfg.method = FusionMethod::kSoftNms;
  else if (method == "wbf") cfg.method = FusionMethod::kWbf;
  else throw std::runtime_error("unknown fusion method: " + method);
  cfg.iou_threshold = iou_thr;
  cfg.soft_sigma = sigma;
  cfg.soft_score_floor = floor;
  if (decay == "gaussian") cfg.decay = SoftDecay::kGaussian;
  else if (decay == "linear") cfg.decay = SoftDecay::kLinear;
  else throw std::runtime_error("unknown decay: " + decay);
  cfg.validate();

  auto dets = read_detections_file(in_path);
  auto fused = fuse(dets, cfg);
  write_detections_file(fused, out_path);
  std::cout << "fused " << dets.size() << " -> " << fused.size()
            << " detections (" << method << ")\n";
  return kExitOk;
}

int cmd_eval(const std::string& dets_path, const std::string& gts_manifest,
             const std::vector<float>& thresholds) {
  EvalReport report = evaluate_files(dets_path, gts_manifest, thresholds);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(6);
  for (const auto& [thr, classes] : report.per_class_ap) {
    for (const auto& [cls, ap] : classes)
      std::cout << "AP@" << thr << " class " << cls << ": " << ap << "\n";
    std::cout << "mAP@" << thr << ": " << report.map_at.at(thr)
              << "  (tp " << report.tp.at(thr) << ", fp " << report.fp.at(thr)
              << ", fn " << report.fn.at(thr) << ")\n";
  }
  return kExitOk;
}

struct GradCase {
  std::string name;
  GradCheckReport report;
};

std::vector<GradCase> run_grad_checks(const std::string& module) {
  std::mt19937 rng(417);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<GradCase> cases;
  auto want = [&](const std::string& m) { return module == "all" || module == m; };

  if (want("gelu")) {
    std::vector<double> x(8), analytic(8);
    for (auto& v : x) v = dist(rng);
    for (size_t i = 0; i < x.size(); ++i) analytic[i] = grad::gelu_derivative(x[i]);
    auto f = [](std::span<const double> v) {
      double s = 0;
      for (double e : v) s += grad::gelu_value(e);
      return s;
    };
    cases.push_back({"gelu", grad_check(f, x, analytic, 1e-5, 1e-3)});
  }
  if (want("sigmoid")) {
    std::vector<double> x(8), analytic(8);
    for (auto& v : x) v = dist(rng);
    for (size_t i = 0; i < x.size(); ++i) analytic[i] = grad::sigmoid_derivative(x[i]);
    auto f = [](std::span<const double> v) {
      double s = 0;
      for (double e : v) s += grad::sigmoid_value(e);
      return s;
    };
    cases.push_back({"sigmoid", grad_check(f, x, analytic, 1e-5, 1e-3)});
  }
  if (want("attention")) {
    const int t = 3, d = 4, heads = 2;
    std::vector<double> input(t * d), wq(d * d), wk(d * d), wv(d * d);
    for (auto* vec : {&input, &wq, &wk, &wv})
      for (auto& v : *vec) v = dist(rng);
    auto res = grad::attention_sum_loss(input, t, d, heads, wq, wk, wv);
    auto f = [&](std::span<const double> x) {
      auto r = grad::attention_sum_loss(x, t, d, heads, wq, wk, wv);
      double s = 0;
      for (double v : r.output) s += v;
      return s;
    };
    cases.push_back({"attention", grad_check(f, input, res.input_grad, 1e-5, 1e-3)});
  }
  if (want("layer_norm")) {
    std::vector<double> x(12), r(12);
    for (auto& v : x) v = dist(rng);
    for (auto& v : r) v = dist(rng);
    auto analytic = grad::layer_norm_weighted_sum_grad(x, r, 1e-5);
    auto f = [&r](std::span<const double> v) {
      return grad::layer_norm_weighted_sum(v, r, 1e-5);
    };
    cases.push_back({"layer_norm", grad_check(f, x, analytic, 1e-5, 1e-3)});
  }
  return cases;
}

int cmd_gradcheck(const std::string& module) {
  auto cases = run_grad_checks(module);
  if (cases.empty()) throw std::runtime_error("unknown gradcheck module: " + module);
  bool all_passed = true;
  for (const auto& c : cases) {
    std::cout << c.name << ": max relative error " << c.report.max_relative_error
              << " -> " << (c.report.passed ? "pass" : "FAIL") << "\n";
    all_passed = all_passed && c.report.passed;
  }
  return all_passed ? kExitOk : kExitInternal;
}

int cmd_bench(const std::string& config_path, int runs, int size,
              const std::string& record_path) {
  ModelConfig cfg = load_model_config(config_path);
  const int image_size = size > 0 ? size : cfg.input_size;
  BenchStats stats = bench_forward(cfg, runs, image_size);
  std::cout << "runs " << stats.runs << ", size " << image_size
            << ": mean " << stats.mean_ms << " ms, p50 " << stats.p50_ms
            << " ms, p95 " << stats.p95_ms << " ms, stability "
            << stats.stability << "\n";
  if (!record_path.empty()) {
    std::ofstream rec(record_path, std::ios::app);
    if (!rec) throw std::runtime_error("cannot open bench record: " + record_path);
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    rec << "{\"config\":\"" << config_path << "\",\"image_size\":" << image_size
        << ",\"runs\":" << stats.runs << ",\"mean_ms\":" << stats.mean_ms
        << ",\"p50_ms\":" << stats.p50_ms << ",\"p95_ms\":" << stats.p95_ms
        << ",\"stability\":" << stats.stability << ",\"unix_ms\":"
        << std::chrono::duration_cast<std::chrono::milliseconds>(now).count()
        << "}\n";
  }
  return kExitOk;
}

int cmd_params(const std::string& config_path) {
  ModelConfig cfg = load_model_config(config_path);
  ParamCount count = count_params(cfg);
  for (const auto& [module, n] : count.per_module)
    std::cout << module << ": " << n << "\n";
  std::cout << "total: " << count.total << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermal small-object detection pipeline"};
  app.require_subcommand(1);

  // generate
  int gen_count = 10, gen_size = 64, gen_objects = 3, gen_classes = 3;
  uint64_t gen_seed = 0;
  float gen_noise = 0.03f;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "write a synthetic scene corpus");
  generate->add_option("--count", gen_count, "number of scenes")->check(CLI::PositiveNumber);
  generate->add_option("--size", gen_size, "square image size in pixels");
  generate->add_option("--seed", gen_seed, "base RNG seed");
  generate->add_option("--objects", gen_objects, "objects per scene");
  generate->add_option("--classes", gen_classes, "number of classes");
  generate->add_option("--noise", gen_noise, "Gaussian noise sigma");
  generate->add_option("--out", gen_out, "output directory")->required();

  // infer
  std::string inf_config, inf_weights, inf_images, inf_out;
  auto* infer = app.add_subcommand("infer", "run the detector over a corpus");
  infer->add_option("--config", inf_config, "model config file")->required();
  infer->add_option("--weights", inf_weights, "weights directory (default: seeded init)");
  infer->add_option("--images", inf_images, "image manifest file")->required();
  infer->add_option("--out", inf_out, "detections output file")->required();

  // fuse
  std::string fuse_method = "soft_nms", fuse_decay = "gaussian", fuse_in, fuse_out;
  float fuse_iou = 0.5f, fuse_sigma = 0.5f, fuse_floor = 0.001f;
  auto* fusec = app.add_subcommand("fuse", "de-duplicate detections");
  fusec->add_option("--method", fuse_method, "nms | soft_nms | wbf");
  fusec->add_option("--iou", fuse_iou, "IoU threshold");
  fusec->add_option("--sigma", fuse_sigma, "soft-NMS gaussian sigma");
  fusec->add_option("--floor", fuse_floor, "soft-NMS score floor");
  fusec->add_option("--decay", fuse_decay, "gaussian | linear");
  fusec->add_option("--in", fuse_in, "input detections file")->required();
  fusec->add_option("--out", fuse_out, "output detections file")->required();

  // eval
  std::string eval_dets, eval_gts;
  std::vector<float> eval_thresholds = {0.5f, 0.95f};
  auto* evalc = app.add_subcommand("eval", "score detections against ground truth");
  evalc->add_option("--dets", eval_dets, "detections file")->required();
  evalc->add_option("--gts", eval_gts, "ground-truth manifest")->required();
  evalc->add_option("--thresholds", eval_thresholds, "IoU matching thresholds");

  // gradcheck
  std::string grad_module = "all";
  auto* gradc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradc->add_option("--module", grad_module, "gelu | sigmoid | attention | layer_norm | all");

  // bench
  std::string bench_config, bench_record;
  int bench_runs = 10, bench_size = 0;
  auto* benchc = app.add_subcommand("bench", "forward-pass latency micro-benchmark");
  benchc->add_option("--config", bench_config, "model config file")->required();
  benchc->add_option("--runs", bench_runs, "timed runs (>= 10)");
  benchc->add_option("--size", bench_size, "image size (default: config input_size)");
  benchc->add_option("--record", bench_record, "JSON-lines file to append the result to");

  // params
  std::string params_config;
  auto* paramsc = app.add_subcommand("params", "per-module parameter counts");
  paramsc->add_option("--config", params_config, "model config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed())
      return cmd_generate(gen_count, gen_size, gen_seed, gen_objects, gen_classes,
                          gen_noise, gen_out);
    if (infer->parsed()) return cmd_infer(inf_config, inf_weights, inf_images, inf_out);
    if (fusec->parsed())
      return cmd_fuse(fuse_method, fuse_iou, fuse_sigma, fuse_floor, fuse_decay,
                      fuse_in, fuse_out);
    if (evalc->parsed()) return cmd_eval(eval_dets, eval_gts, eval_thresholds);
    if (gradc->parsed()) return cmd_gradcheck(grad_module);
    if (benchc->parsed())
      return cmd_bench(bench_config, bench_runs, bench_size, bench_record);
    if (paramsc->parsed()) return cmd_params(params_config);
  } catch (const std::invalid_argument& e) {
    // bad inputs: malformed configs, shapes, parameter ranges
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
