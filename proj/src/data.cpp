#include "thermdet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "thermdet/box_fusion.hpp"

namespace thermdet {

ThermalScene generate_scene(const SceneSpec& spec) {
  if (spec.min_object < 3)
    throw std::invalid_argument("generate_scene: objects must be at least 3 px");
  if (spec.max_object < spec.min_object ||
      spec.max_object > std::min(spec.width, spec.height))
    throw std::invalid_argument("generate_scene: bad object size range");

  std::mt19937_64 rng(spec.seed);
  const int w = spec.width, h = spec.height;

  ThermalScene scene;
  scene.rng_seed = spec.seed;
  scene.noise_level = spec.noise_sigma;
  scene.background_low = spec.background_low;
  scene.background_high = spec.background_high;
  scene.image = Tensor({1, h, w});

  // diagonal ramp from low (top-left) to high (bottom-right)
  const float span = static_cast<float>(w + h - 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      scene.image.at(0, y, x) =
          spec.background_low +
          (spec.background_high - spec.background_low) * static_cast<float>(x + y) / span;

  std::uniform_int_distribution<int> size_dist(spec.min_object, spec.max_object);
  for (int obj = 0; obj < spec.n_objects; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const int ow = size_dist(rng);
      const int oh = size_dist(rng);
      std::uniform_int_distribution<int> x_dist(0, w - ow);
      std::uniform_int_distribution<int> y_dist(0, h - oh);
      const int x0 = x_dist(rng);
      const int y0 = y_dist(rng);
      bool ok = true;
      for (const auto& other : scene.objects) {
        const float ov = iou(static_cast<float>(x0), static_cast<float>(y0),
                             static_cast<float>(x0 + ow), static_cast<float>(y0 + oh),
                             other.x1, other.y1, other.x2, other.y2);
        if (ov > spec.max_overlap_iou) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      GroundTruth gt;
      gt.class_id = static_cast<int>(rng() % static_cast<uint64_t>(spec.num_classes));
      gt.x1 = static_cast<float>(x0);
      gt.y1 = static_cast<float>(y0);
      gt.x2 = static_cast<float>(x0 + ow);
      gt.y2 = static_cast<float>(y0 + oh);
      for (int y = y0; y < y0 + oh; ++y)
        for (int x = x0; x < x0 + ow; ++x)
          scene.image.at(0, y, x) += spec.contrast;
      scene.objects.push_back(gt);
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("generate_scene: cannot place object within overlap budget");
  }

  if (spec.noise_sigma > 0.0f) {
    std::normal_distribution<float> noise(0.0f, spec.noise_sigma);
    for (int64_t i = 0; i < scene.image.size(); ++i) scene.image[i] += noise(rng);
  }
  for (int64_t i = 0; i < scene.image.size(); ++i)
    scene.image[i] = std::clamp(scene.image[i], 0.0f, 1.0f);
  return scene;
}

namespace {

int round_to_32(float v) {
  const int r = static_cast<int>(std::lround(v / 32.0f)) * 32;
  return std::max(32, r);
}

Tensor bilinear_resize(const Tensor& image, int tw, int th) {
  const int h = image.dim(1), w = image.dim(2);
  Tensor out({1, th, tw});
  const float sx = static_cast<float>(w) / tw;
  const float sy = static_cast<float>(h) / th;
  for (int y = 0; y < th; ++y) {
    const float fy = std::max(0.0f, (y + 0.5f) * sy - 0.5f);
    const int y0 = std::min(static_cast<int>(fy), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int x = 0; x < tw; ++x) {
      const float fx = std::max(0.0f, (x + 0.5f) * sx - 0.5f);
      const int x0 = std::min(static_cast<int>(fx), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wx = fx - static_cast<float>(x0);
      out.at(0, y, x) = (1 - wy) * ((1 - wx) * image.at(0, y0, x0) + wx * image.at(0, y0, x1)) +
                        wy * ((1 - wx) * image.at(0, y1, x0) + wx * image.at(0, y1, x1));
    }
  }
  return out;
}

Augmented resize_op(const Tensor& image, const std::vector<GroundTruth>& labels,
                    float factor) {
  const int h = image.dim(1), w = image.dim(2);
  const int tw = round_to_32(static_cast<float>(w) * factor);
  const int th = round_to_32(static_cast<float>(h) * factor);
  Augmented out;
  out.image = bilinear_resize(image, tw, th);
  const float rx = static_cast<float>(tw) / w;
  const float ry = static_cast<float>(th) / h;
  out.labels = labels;
  for (auto& gt : out.labels) {
    gt.x1 *= rx;
    gt.x2 *= rx;
    gt.y1 *= ry;
    gt.y2 *= ry;
  }
  return out;
}

}  // namespace

Augmented augment(const Tensor& image, const std::vector<GroundTruth>& labels,
                  AugmentOp op) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw std::invalid_argument("augment: image must be (1,h,w)");
  const int h = image.dim(1), w = image.dim(2);
  const float fw = static_cast<float>(w), fh = static_cast<float>(h);

  switch (op) {
    case AugmentOp::kResize067: return resize_op(image, labels, 0.67f);
    case AugmentOp::kResize085: return resize_op(image, labels, 0.85f);
    case AugmentOp::kFlipH: {
      Augmented out;
      out.image = Tensor({1, h, w});
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.image.at(0, y, x) = image.at(0, y, w - 1 - x);
      out.labels = labels;
      for (auto& gt : out.labels) {
        const float x1 = fw - gt.x2, x2 = fw - gt.x1;
        gt.x1 = x1;
        gt.x2 = x2;
      }
      return out;
    }
    case AugmentOp::kFlipV: {
      Augmented out;
      out.image = Tensor({1, h, w});
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.image.at(0, y, x) = image.at(0, h - 1 - y, x);
      out.labels = labels;
      for (auto& gt : out.labels) {
        const float y1 = fh - gt.y2, y2 = fh - gt.y1;
        gt.y1 = y1;
        gt.y2 = y2;
      }
      return out;
    }
    case AugmentOp::kRot90: {
      // 90 degrees clockwise: (x,y) -> (h-1-y, x), new dims (w',h') = (h,w)
      Augmented out;
      out.image = Tensor({1, w, h});
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.image.at(0, x, h - 1 - y) = image.at(0, y, x);
      out.labels = labels;
      for (auto& gt : out.labels) {
        const float nx1 = fh - gt.y2, ny1 = gt.x1;
        const float nx2 = fh - gt.y1, ny2 = gt.x2;
        gt.x1 = nx1;
        gt.y1 = ny1;
        gt.x2 = nx2;
        gt.y2 = ny2;
      }
      return out;
    }
    case AugmentOp::kRot180: {
      Augmented tmp = augment(image, labels, AugmentOp::kRot90);
      return augment(tmp.image, tmp.labels, AugmentOp::kRot90);
    }
    case AugmentOp::kRot270: {
      Augmented tmp = augment(image, labels, AugmentOp::kRot180);
      return augment(tmp.image, tmp.labels, AugmentOp::kRot90);
    }
  }
  throw std::invalid_argument("augment: unknown op");
}

namespace {

// Reads PGM header tokens, skipping whitespace and # comments; reports byte
// offsets in errors.
struct PgmHeader {
  int width = 0, height = 0, maxval = 0;
  std::streamoff payload_offset = 0;
};

PgmHeader parse_pgm_header(std::istream& is, const std::string& path) {
  auto fail = [&](const std::string& what) {
    std::ostringstream err;
    err << "pgm " << path << ": " << what << " at byte " << is.tellg();
    throw std::runtime_error(err.str());
  };
  char magic[2];
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || magic[1] != '5') fail("not a binary PGM (P5)");

  auto next_int = [&]() {
    int ch = is.get();
    while (is && (std::isspace(ch) || ch == '#')) {
      if (ch == '#')
        while (is && is.get() != '\n') {}
      ch = is.get();
    }
    if (!is || !std::isdigit(ch)) fail("malformed header");
    int value = 0;
    while (is && std::isdigit(ch)) {
      value = value * 10 + (ch - '0');
      ch = is.get();
    }
    if (!std::isspace(ch)) fail("malformed header");
    return value;
  };

  PgmHeader hdr;
  hdr.width = next_int();
  hdr.height = next_int();
  hdr.maxval = next_int();
  if (hdr.maxval != 255 && hdr.maxval != 65535) fail("maxval must be 255 or 65535");
  hdr.payload_offset = is.tellg();
  return hdr;
}

}  // namespace

std::pair<int, int> pgm_dims(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  const PgmHeader hdr = parse_pgm_header(is, path);
  return {hdr.width, hdr.height};
}

Tensor load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  const PgmHeader hdr = parse_pgm_header(is, path);
  const int64_t n = static_cast<int64_t>(hdr.width) * hdr.height;
  Tensor image({1, hdr.height, hdr.width});
  if (hdr.maxval == 255) {
    std::vector<unsigned char> buf(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(buf.data()), n);
    if (!is) throw std::runtime_error("pgm " + path + ": truncated payload");
    for (int64_t i = 0; i < n; ++i) image[i] = static_cast<float>(buf[static_cast<size_t>(i)]) / 255.0f;
  } else {
    std::vector<unsigned char> buf(static_cast<size_t>(2 * n));
    is.read(reinterpret_cast<char*>(buf.data()), 2 * n);
    if (!is) throw std::runtime_error("pgm " + path + ": truncated payload");
    for (int64_t i = 0; i < n; ++i) {
      // 16-bit PGM samples are big-endian
      const unsigned v = (static_cast<unsigned>(buf[static_cast<size_t>(2 * i)]) << 8) |
                         buf[static_cast<size_t>(2 * i + 1)];
      image[i] = static_cast<float>(v) / 65535.0f;
    }
  }
  return image;
}

void save_pgm(const Tensor& image, const std::string& path) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw std::invalid_argument("save_pgm: image must be (1,h,w)");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  const int h = image.dim(1), w = image.dim(2);
  os << "P5\n" << w << ' ' << h << "\n65535\n";
  std::vector<unsigned char> buf(static_cast<size_t>(2 * w * h));
  for (int64_t i = 0; i < image.size(); ++i) {
    const float clamped = std::clamp(image[i], 0.0f, 1.0f);
    const unsigned v = static_cast<unsigned>(std::lround(clamped * 65535.0f));
    buf[static_cast<size_t>(2 * i)] = static_cast<unsigned char>(v >> 8);
    buf[static_cast<size_t>(2 * i + 1)] = static_cast<unsigned char>(v & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::string generate_corpus(const SceneSpec& base, int count,
                            const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot open manifest for write");
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = base.seed + static_cast<uint64_t>(i);
    ThermalScene scene = generate_scene(spec);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d", i);
    const std::string image_rel = std::string(name) + ".pgm";
    const std::string label_rel = std::string(name) + ".txt";
    save_pgm(scene.image, (dir / image_rel).string());
    save_yolo_labels(scene.objects, spec.width, spec.height, (dir / label_rel).string());
    manifest << image_rel << ' ' << label_rel << '\n';
  }
  return (dir / "manifest.txt").string();
}

}  // namespace thermdet
