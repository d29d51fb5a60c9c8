#include "thermdet/heads.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace thermdet {

void AnchorTable::validate() const {
  if (levels.empty()) throw std::invalid_argument("AnchorTable: no levels");
  for (const auto& level : levels) {
    if (level.stride <= 0) throw std::invalid_argument("AnchorTable: bad stride");
    if (level.anchors.size() != 3)
      throw std::invalid_argument("AnchorTable: 3 anchors per level required");
    for (size_t i = 0; i < level.anchors.size(); ++i) {
      const auto& [w, h] = level.anchors[i];
      if (w <= 0 || h <= 0) throw std::invalid_argument("AnchorTable: anchor dims must be positive");
      if (i > 0) {
        const auto& [pw, ph] = level.anchors[i - 1];
        if (w * h < pw * ph)
          throw std::invalid_argument("AnchorTable: anchors must be sorted by area");
      }
    }
  }
}

const AnchorTable::Level& AnchorTable::for_stride(int stride) const {
  for (const auto& level : levels)
    if (level.stride == stride) return level;
  throw std::invalid_argument("AnchorTable: no anchors for stride " + std::to_string(stride));
}

AnchorTable load_anchor_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open anchor table: " + path);
  AnchorTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    AnchorTable::Level level;
    float w, h;
    if (!(ss >> level.stride))
      throw std::runtime_error("anchor table " + path + ": malformed line " +
                               std::to_string(line_no));
    while (ss >> w >> h) level.anchors.emplace_back(w, h);
    if (!ss.eof() || level.anchors.empty())
      throw std::runtime_error("anchor table " + path + ": malformed line " +
                               std::to_string(line_no));
    table.levels.push_back(std::move(level));
  }
  table.validate();
  return table;
}

void save_anchor_table(const AnchorTable& table, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& level : table.levels) {
    os << level.stride;
    for (const auto& [w, h] : level.anchors) os << ' ' << w << ' ' << h;
    os << '\n';
  }
}

RawPrediction head_forward(const FeatureMap& level, const Tensor& filters,
                           const Tensor& bias, int num_anchors, int num_classes) {
  const int want = num_anchors * (5 + num_classes);
  if (filters.dim(0) != want || filters.dim(1) != level.channels())
    throw std::invalid_argument("head_forward: filter shape does not match head spec");
  RawPrediction raw;
  raw.logits = conv2d(level.map, filters, bias, 1, 0);
  raw.stride = level.stride;
  raw.num_anchors = num_anchors;
  raw.num_classes = num_classes;
  return raw;
}

namespace {
float sigmoid_scalar(float x) { return 1.0f / (1.0f + std::exp(-x)); }
}

std::vector<Detection> decode(const RawPrediction& raw,
                              const AnchorTable::Level& anchors,
                              int image_w, int image_h, float conf_threshold,
                              const std::string& image_id) {
  if (anchors.stride != raw.stride)
    throw std::invalid_argument("decode: anchor stride does not match prediction stride");
  const int per_anchor = 5 + raw.num_classes;
  if (raw.logits.dim(0) != raw.num_anchors * per_anchor)
    throw std::invalid_argument(
        "decode: logit channels do not match anchors * (5 + classes)");
  if (static_cast<int>(anchors.anchors.size()) < raw.num_anchors)
    throw std::invalid_argument("decode: not enough anchors for this level");
  const int h = raw.logits.dim(1), w = raw.logits.dim(2);
  const float stride = static_cast<float>(raw.stride);

  std::vector<Detection> dets;
  for (int a = 0; a < raw.num_anchors; ++a) {
    const int base = a * per_anchor;
    const auto& [aw, ah] = anchors.anchors[static_cast<size_t>(a)];
    for (int gy = 0; gy < h; ++gy) {
      for (int gx = 0; gx < w; ++gx) {
        const float obj = sigmoid_scalar(raw.logits.at(base + 4, gy, gx));
        int best_class = 0;
        float best_logit = raw.logits.at(base + 5, gy, gx);
        for (int c = 1; c < raw.num_classes; ++c) {
          const float l = raw.logits.at(base + 5 + c, gy, gx);
          if (l > best_logit) {
            best_logit = l;
            best_class = c;
          }
        }
        const float score = obj * sigmoid_scalar(best_logit);
        if (score < conf_threshold) continue;

        const float cx = (2.0f * sigmoid_scalar(raw.logits.at(base + 0, gy, gx)) - 0.5f +
                          static_cast<float>(gx)) * stride;
        const float cy = (2.0f * sigmoid_scalar(raw.logits.at(base + 1, gy, gx)) - 0.5f +
                          static_cast<float>(gy)) * stride;
        const float sw = 2.0f * sigmoid_scalar(raw.logits.at(base + 2, gy, gx));
        const float sh = 2.0f * sigmoid_scalar(raw.logits.at(base + 3, gy, gx));
        const float bw = sw * sw * aw;
        const float bh = sh * sh * ah;

        Detection d;
        d.image_id = image_id;
        d.class_id = best_class;
        d.score = score;
        d.x1 = std::clamp(cx - bw / 2, 0.0f, static_cast<float>(image_w));
        d.y1 = std::clamp(cy - bh / 2, 0.0f, static_cast<float>(image_h));
        d.x2 = std::clamp(cx + bw / 2, 0.0f, static_cast<float>(image_w));
        d.y2 = std::clamp(cy + bh / 2, 0.0f, static_cast<float>(image_h));
        if (d.x1 >= d.x2 || d.y1 >= d.y2) continue;
        dets.push_back(std::move(d));
      }
    }
  }
  return dets;
}

}  // namespace thermdet
