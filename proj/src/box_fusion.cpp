#include "thermdet/box_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace thermdet {

void FusionConfig::validate() const {
  if (iou_threshold <= 0.0f || iou_threshold >= 1.0f)
    throw std::invalid_argument("FusionConfig: iou_threshold must be in (0,1)");
  if (soft_sigma <= 0.0f)
    throw std::invalid_argument("FusionConfig: soft_sigma must be positive");
  if (soft_score_floor < 0.0f || soft_score_floor >= 1.0f)
    throw std::invalid_argument("FusionConfig: soft_score_floor must be in [0,1)");
}

float iou(float ax1, float ay1, float ax2, float ay2,
          float bx1, float by1, float bx2, float by2) {
  const float area_a = (ax2 - ax1) * (ay2 - ay1);
  const float area_b = (bx2 - bx1) * (by2 - by1);
  if (area_a <= 0.0f || area_b <= 0.0f) return 0.0f;  // degenerate box
  const float ix1 = std::max(ax1, bx1), iy1 = std::max(ay1, by1);
  const float ix2 = std::min(ax2, bx2), iy2 = std::min(ay2, by2);
  const float iw = ix2 - ix1, ih = iy2 - iy1;
  if (iw <= 0.0f || ih <= 0.0f) return 0.0f;
  const float inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

float iou(const Detection& a, const Detection& b) {
  return iou(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2);
}

namespace {

struct Indexed {
  Detection det;
  size_t order;  // original input index, for tie-breaking
};

// score-descending, ties by earlier input index
bool score_before(const Indexed& a, const Indexed& b) {
  if (a.det.score != b.det.score) return a.det.score > b.det.score;
  return a.order < b.order;
}

using Group = std::vector<Indexed>;

std::map<std::pair<std::string, int>, Group> group_by_image_class(
    const std::vector<Detection>& dets) {
  std::map<std::pair<std::string, int>, Group> groups;
  for (size_t i = 0; i < dets.size(); ++i)
    groups[{dets[i].image_id, dets[i].class_id}].push_back({dets[i], i});
  return groups;
}

std::vector<Detection> flatten_sorted(std::vector<Indexed> all) {
  std::sort(all.begin(), all.end(), score_before);
  std::vector<Detection> out;
  out.reserve(all.size());
  for (auto& e : all) out.push_back(std::move(e.det));
  return out;
}

Group nms_group(Group group, const FusionConfig& cfg) {
  std::sort(group.begin(), group.end(), score_before);
  Group kept;
  for (auto& cand : group) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (iou(k.det, cand.det) > cfg.iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(std::move(cand));
  }
  return kept;
}

Group soft_nms_group(Group live, const FusionConfig& cfg) {
  Group out;
  while (!live.empty()) {
    auto best = std::min_element(live.begin(), live.end(), score_before);
    Indexed picked = std::move(*best);
    live.erase(best);
    Group next;
    next.reserve(live.size());
    for (auto& cand : live) {
      const float overlap = iou(picked.det, cand.det);
      if (cfg.decay == SoftDecay::kGaussian) {
        cand.det.score *= std::exp(-(overlap * overlap) / cfg.soft_sigma);
      } else if (overlap > cfg.iou_threshold) {
        cand.det.score *= (1.0f - overlap);
      }
      if (cand.det.score >= cfg.soft_score_floor) next.push_back(std::move(cand));
    }
    live = std::move(next);
    out.push_back(std::move(picked));
  }
  return out;
}

Group wbf_group(Group group, const FusionConfig& cfg) {
  std::sort(group.begin(), group.end(), score_before);
  struct Cluster {
    Detection fused;
    size_t order;          // earliest member index
    float score_sum = 0;   // for the weighted coordinate mean
    float wx1 = 0, wy1 = 0, wx2 = 0, wy2 = 0;
    std::vector<float> scores;
  };
  std::vector<Cluster> clusters;
  for (const auto& cand : group) {
    Cluster* home = nullptr;
    for (auto& cl : clusters)
      if (iou(cl.fused, cand.det) > cfg.iou_threshold) {
        home = &cl;
        break;
      }
    if (!home) {
      clusters.push_back({cand.det, cand.order, 0, 0, 0, 0, 0, {}});
      home = &clusters.back();
    }
    const float s = cand.det.score;
    home->score_sum += s;
    home->wx1 += s * cand.det.x1;
    home->wy1 += s * cand.det.y1;
    home->wx2 += s * cand.det.x2;
    home->wy2 += s * cand.det.y2;
    home->scores.push_back(s);
    home->fused.x1 = home->wx1 / home->score_sum;
    home->fused.y1 = home->wy1 / home->score_sum;
    home->fused.x2 = home->wx2 / home->score_sum;
    home->fused.y2 = home->wy2 / home->score_sum;
    home->fused.score = std::accumulate(home->scores.begin(), home->scores.end(), 0.0f) /
                        static_cast<float>(home->scores.size());
  }
  Group out;
  out.reserve(clusters.size());
  for (auto& cl : clusters) out.push_back({std::move(cl.fused), cl.order});
  return out;
}

template <typename Fn>
std::vector<Detection> run_per_group(const std::vector<Detection>& dets,
                                     const FusionConfig& cfg, Fn fn) {
  cfg.validate();
  std::vector<Indexed> all;
  for (auto& [key, group] : group_by_image_class(dets)) {
    Group fused = fn(std::move(group), cfg);
    all.insert(all.end(), std::make_move_iterator(fused.begin()),
               std::make_move_iterator(fused.end()));
  }
  return flatten_sorted(std::move(all));
}

}  // namespace

std::vector<Detection> nms(const std::vector<Detection>& dets, const FusionConfig& cfg) {
  return run_per_group(dets, cfg, nms_group);
}

std::vector<Detection> soft_nms(const std::vector<Detection>& dets, const FusionConfig& cfg) {
  return run_per_group(dets, cfg, soft_nms_group);
}

std::vector<Detection> wbf(const std::vector<Detection>& dets, const FusionConfig& cfg) {
  return run_per_group(dets, cfg, wbf_group);
}

std::vector<Detection> fuse(const std::vector<Detection>& dets, const FusionConfig& cfg) {
  switch (cfg.method) {
    case FusionMethod::kNms: return nms(dets, cfg);
    case FusionMethod::kSoftNms: return soft_nms(dets, cfg);
    case FusionMethod::kWbf: return wbf(dets, cfg);
  }
  throw std::invalid_argument("fuse: unknown method");
}

}  // namespace thermdet
