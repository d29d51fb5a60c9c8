// Python bindings for the core operations: tensor math, box fusion,
// evaluation, synthetic data and the end-to-end model.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>

#include "thermdet/box_fusion.hpp"
#include "thermdet/conv_blocks.hpp"
#include "thermdet/data.hpp"
#include "thermdet/eval.hpp"
#include "thermdet/model.hpp"
#include "thermdet/tensor.hpp"

namespace py = pybind11;
using namespace thermdet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& array) {
  std::vector<int> shape;
  for (py::ssize_t i = 0; i < array.ndim(); ++i)
    shape.push_back(static_cast<int>(array.shape(i)));
  Tensor t(shape);
  std::memcpy(t.data(), array.data(), sizeof(float) * static_cast<size_t>(t.size()));
  return t;
}

py::array_t<float> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), t.data(), sizeof(float) * static_cast<size_t>(t.size()));
  return out;
}

FusionConfig make_fusion_config(const std::string& method, float iou_threshold,
                                float sigma, float floor, const std::string& decay) {
  FusionConfig cfg;
  if (method == "nms") cfg.method = FusionMethod::kNms;
  else if (method == "soft_nms") cfg.method = FusionMethod::kSoftNms;
  else if (method == "wbf") cfg.method = FusionMethod::kWbf;
  else throw std::invalid_argument("unknown fusion method: " + method);
  cfg.iou_threshold = iou_threshold;
  cfg.soft_sigma = sigma;
  cfg.soft_score_floor = floor;
  if (decay == "gaussian") cfg.decay = SoftDecay::kGaussian;
  else if (decay == "linear") cfg.decay = SoftDecay::kLinear;
  else throw std::invalid_argument("unknown decay: " + decay);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_thermdet, m) {
  m.doc() = "thermal small-object detection pipeline (core bindings)";

  py::class_<Detection>(m, "Detection")
      .def(py::init([](std::string image_id, int class_id, float score, float x1,
                       float y1, float x2, float y2) {
             return Detection{std::move(image_id), class_id, score, x1, y1, x2, y2};
           }),
           py::arg("image_id"), py::arg("class_id"), py::arg("score"),
           py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"))
      .def_readwrite("image_id", &Detection::image_id)
      .def_readwrite("class_id", &Detection::class_id)
      .def_readwrite("score", &Detection::score)
      .def_readwrite("x1", &Detection::x1)
      .def_readwrite("y1", &Detection::y1)
      .def_readwrite("x2", &Detection::x2)
      .def_readwrite("y2", &Detection::y2)
      .def("__repr__", [](const Detection& d) {
        return "Detection(" + d.image_id + ", cls " + std::to_string(d.class_id) +
               ", score " + std::to_string(d.score) + ")";
      });

  py::class_<GroundTruth>(m, "GroundTruth")
      .def(py::init([](std::string image_id, int class_id, float x1, float y1,
                       float x2, float y2) {
             return GroundTruth{std::move(image_id), class_id, x1, y1, x2, y2};
           }),
           py::arg("image_id"), py::arg("class_id"), py::arg("x1"), py::arg("y1"),
           py::arg("x2"), py::arg("y2"))
      .def_readwrite("image_id", &GroundTruth::image_id)
      .def_readwrite("class_id", &GroundTruth::class_id)
      .def_readwrite("x1", &GroundTruth::x1)
      .def_readwrite("y1", &GroundTruth::y1)
      .def_readwrite("x2", &GroundTruth::x2)
      .def_readwrite("y2", &GroundTruth::y2);

  m.def(
      "conv2d",
      [](const FloatArray& input, const FloatArray& filters, py::object bias,
         int stride, int padding, int dilation) {
        Tensor b;
        if (!bias.is_none()) b = to_tensor(bias.cast<FloatArray>());
        return to_array(conv2d(to_tensor(input), to_tensor(filters), b, stride,
                               padding, dilation));
      },
      py::arg("input"), py::arg("filters"), py::arg("bias") = py::none(),
      py::arg("stride") = 1, py::arg("padding") = 0, py::arg("dilation") = 1);

  m.def("gelu", [](const FloatArray& x) { return to_array(gelu(to_tensor(x))); });
  m.def("sigmoid", [](const FloatArray& x) { return to_array(sigmoid(to_tensor(x))); });
  m.def(
      "softmax",
      [](const FloatArray& x, int axis) { return to_array(softmax(to_tensor(x), axis)); },
      py::arg("x"), py::arg("axis") = -1);

  m.def(
      "ghost_param_count",
      [](int in_channels, int primary_out, int total_out, int kernel, int cheap_kernel) {
        GhostConvSpec spec{in_channels, primary_out, total_out, kernel, cheap_kernel, 1, kernel / 2};
        auto count = ghost_param_count(spec);
        return py::make_tuple(count.ghost, count.standard);
      },
      py::arg("in_channels"), py::arg("primary_out"), py::arg("total_out"),
      py::arg("kernel") = 3, py::arg("cheap_kernel") = 3);

  const auto fuse_wrapper = [](const std::vector<Detection>& dets,
                               const std::string& method, float iou_threshold,
                               float sigma, float floor, const std::string& decay) {
    return fuse(dets, make_fusion_config(method, iou_threshold, sigma, floor, decay));
  };
  m.def("nms", fuse_wrapper, py::arg("dets"), py::arg("method") = "nms",
        py::arg("iou_threshold") = 0.5f, py::arg("sigma") = 0.5f,
        py::arg("floor") = 0.001f, py::arg("decay") = "gaussian");
  m.def("soft_nms", fuse_wrapper, py::arg("dets"), py::arg("method") = "soft_nms",
        py::arg("iou_threshold") = 0.5f, py::arg("sigma") = 0.5f,
        py::arg("floor") = 0.001f, py::arg("decay") = "gaussian");
  m.def("wbf", fuse_wrapper, py::arg("dets"), py::arg("method") = "wbf",
        py::arg("iou_threshold") = 0.5f, py::arg("sigma") = 0.5f,
        py::arg("floor") = 0.001f, py::arg("decay") = "gaussian");
  m.def("box_iou",
        [](float ax1, float ay1, float ax2, float ay2, float bx1, float by1,
           float bx2, float by2) { return iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2); });

  m.def(
      "generate_scene",
      [](int size, int objects, int classes, float noise, uint64_t seed) {
        SceneSpec spec;
        spec.width = spec.height = size;
        spec.n_objects = objects;
        spec.num_classes = classes;
        spec.noise_sigma = noise;
        spec.seed = seed;
        ThermalScene scene = generate_scene(spec);
        return py::make_tuple(to_array(scene.image), scene.objects);
      },
      py::arg("size") = 64, py::arg("objects") = 3, py::arg("classes") = 3,
      py::arg("noise") = 0.03f, py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
         const std::vector<float>& thresholds) {
        EvalReport report = evaluate(dets, gts, thresholds);
        py::dict out;
        for (const auto& [thr, value] : report.map_at) {
          py::dict entry;
          entry["map"] = value;
          py::dict per_class;
          for (const auto& [cls, ap] : report.per_class_ap.at(thr))
            per_class[py::int_(cls)] = ap;
          entry["per_class_ap"] = per_class;
          entry["tp"] = report.tp.at(thr);
          entry["fp"] = report.fp.at(thr);
          entry["fn"] = report.fn.at(thr);
          out[py::float_(thr)] = entry;
        }
        return out;
      },
      py::arg("dets"), py::arg("gts"),
      py::arg("thresholds") = std::vector<float>{0.5f, 0.95f});

  m.def("count_params", [](const std::string& config_path) {
    ParamCount count = count_params(load_model_config(config_path));
    py::dict per_module;
    for (const auto& [module, n] : count.per_module) per_module[py::str(module)] = n;
    return py::make_tuple(count.total, per_module);
  });

  m.def(
      "full_forward",
      [](const std::string& config_path, const FloatArray& image,
         const std::string& image_id) {
        ModelConfig cfg = load_model_config(config_path);
        Model model = build_model(cfg);
        ForwardResult result = full_forward(to_tensor(image), model, image_id);
        py::dict per_level;
        for (int l = 0; l < 4; ++l)
          per_level[py::int_(result.level_strides[static_cast<size_t>(l)])] =
              result.per_level[static_cast<size_t>(l)];
        return py::make_tuple(result.detections, per_level);
      },
      py::arg("config_path"), py::arg("image"), py::arg("image_id") = "0");
}
