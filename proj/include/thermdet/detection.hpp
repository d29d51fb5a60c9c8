#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace thermdet {

// Axis-aligned detection in pixel coordinates, x1 < x2 and y1 < y2.
struct Detection {
  std::string image_id;
  int class_id = 0;
  float score = 0.0f;  // objectness * class probability, in [0,1]
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Text line format: `image_id class_id score x1 y1 x2 y2`, six decimals.
void write_detections(const std::vector<Detection>& dets, std::ostream& os);
void write_detections_file(const std::vector<Detection>& dets, const std::string& path);
std::vector<Detection> read_detections(std::istream& is);
std::vector<Detection> read_detections_file(const std::string& path);

}  // namespace thermdet
