#include "thermdet/detection.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace thermdet {

void write_detections(const std::vector<Detection>& dets, std::ostream& os) {
  os << std::fixed << std::setprecision(6);
  for (const auto& d : dets)
    os << d.image_id << ' ' << d.class_id << ' ' << d.score << ' ' << d.x1 << ' '
       << d.y1 << ' ' << d.x2 << ' ' << d.y2 << '\n';
}

void write_detections_file(const std::vector<Detection>& dets, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  write_detections(dets, os);
}

std::vector<Detection> read_detections(std::istream& is) {
  std::vector<Detection> dets;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Detection d;
    if (!(ss >> d.image_id >> d.class_id >> d.score >> d.x1 >> d.y1 >> d.x2 >> d.y2)) {
      std::ostringstream err;
      err << "detections: parse error at line " << line_no;
      throw std::runtime_error(err.str());
    }
    dets.push_back(std::move(d));
  }
  return dets;
}

std::vector<Detection> read_detections_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for read: " + path);
  return read_detections(is);
}

}  // namespace thermdet
