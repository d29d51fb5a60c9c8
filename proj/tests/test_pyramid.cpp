#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "thermdet/pyramid.hpp"

using namespace thermdet;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// 3x3 filters acting as per-channel identity (center tap of the own channel).
Tensor identity_conv3(int c) {
  Tensor f({c, c, 3, 3});
  for (int i = 0; i < c; ++i) f[((static_cast<int64_t>(i) * c + i) * 3 + 1) * 3 + 1] = 1.0f;
  return f;
}

PyramidLevels random_pyramid(int c, int base, std::mt19937& rng) {
  PyramidLevels p;
  int stride = 4, dim = base / 4;
  for (int i = 0; i < 4; ++i) {
    p.levels.push_back({random_tensor({c, dim, dim}, rng), stride});
    stride *= 2;
    dim /= 2;
  }
  return p;
}

BifpnWeights random_bifpn(int c, std::mt19937& rng) {
  BifpnWeights w;
  std::uniform_real_distribution<float> wd(0.2f, 2.0f);
  for (auto& node : w.nodes) {
    const size_t n_inputs = (&node - w.nodes.data()) == 3 || (&node - w.nodes.data()) == 4 ? 3 : 2;
    node.weights.raw.assign(n_inputs, 0.0f);
    for (auto& r : node.weights.raw) r = wd(rng);
    node.conv_filters = random_tensor({c, c, 3, 3}, rng);
    node.conv_bias = random_tensor({c}, rng);
  }
  return w;
}

}  // namespace

TEST_CASE("resize_nearest: 2x upsample replicates each pixel") {
  Tensor x({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  FeatureMap out = resize_nearest({x, 8}, ResizeFactor::kDouble);
  CHECK(out.stride == 4);
  REQUIRE(out.map.dim(1) == 4);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx)
      CHECK(out.map.at(0, y, xx) == x.at(0, y / 2, xx / 2));
}

TEST_CASE("resize_nearest: downsample takes the 2x2 max") {
  Tensor x({1, 2, 2}, {1.0f, 5.0f, -3.0f, 2.0f});
  FeatureMap out = resize_nearest({x, 4}, ResizeFactor::kHalf);
  CHECK(out.stride == 8);
  REQUIRE(out.map.size() == 1);
  CHECK(out.map[0] == 5.0f);
}

TEST_CASE("resize_nearest: odd dims cannot be halved") {
  Tensor x({1, 3, 4});
  CHECK_THROWS_AS(resize_nearest({x, 4}, ResizeFactor::kHalf), std::invalid_argument);
}

TEST_CASE("resize_nearest: up then down restores the map exactly") {
  std::mt19937 rng(60);
  Tensor x = random_tensor({3, 4, 6}, rng);
  FeatureMap up = resize_nearest({x, 8}, ResizeFactor::kDouble);
  FeatureMap back = resize_nearest(up, ResizeFactor::kHalf);
  CHECK(back.stride == 8);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(back.map[i] == x[i]);
}

TEST_CASE("FusionWeights: negative raw weights clamp to zero") {
  FusionWeights w;
  w.raw = {-1.0f, 0.5f};
  CHECK(w.value(0) == 0.0f);
  CHECK(w.value(1) == 0.5f);
}

TEST_CASE("weighted_fuse: zero-weight partner, identity conv, known normalization") {
  std::mt19937 rng(61);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor other = random_tensor({2, 4, 4}, rng);
  FusionWeights w;
  w.raw = {1.0f, 0.0f};
  FeatureMap out = weighted_fuse({{x, 8}, {other, 8}}, w, identity_conv3(2), Tensor({2}));
  const float coef = 1.0f / (1.0f + 1e-4f);
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(out.map[i] == doctest::Approx(coef * x[i]).epsilon(1e-6));
}

TEST_CASE("weighted_fuse: two inputs blend by normalized weights") {
  std::mt19937 rng(62);
  Tensor a = random_tensor({1, 3, 3}, rng);
  Tensor b = random_tensor({1, 3, 3}, rng);
  FusionWeights w;
  w.raw = {3.0f, 1.0f};
  FeatureMap out = weighted_fuse({{a, 8}, {b, 8}}, w, identity_conv3(1), Tensor({1}));
  const float denom = 4.0f + 1e-4f;
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK(out.map[i] == doctest::Approx((3.0f * a[i] + 1.0f * b[i]) / denom).epsilon(1e-6));
}

TEST_CASE("weighted_fuse: all-zero weights leave only the conv bias") {
  std::mt19937 rng(63);
  Tensor a = random_tensor({1, 3, 3}, rng);
  FusionWeights w;
  w.raw = {0.0f, -2.0f};
  Tensor bias({1}, {0.75f});
  FeatureMap out = weighted_fuse({{a, 8}, {a, 8}}, w, identity_conv3(1), bias);
  for (int64_t i = 0; i < out.map.size(); ++i) CHECK(out.map[i] == 0.75f);
}

TEST_CASE("weighted_fuse: mismatched input shapes rejected") {
  FusionWeights w;
  w.raw = {1.0f, 1.0f};
  CHECK_THROWS_AS(
      weighted_fuse({{Tensor({1, 4, 4}), 8}, {Tensor({1, 2, 2}), 8}}, w,
                    identity_conv3(1), Tensor({1})),
      std::invalid_argument);
}

TEST_CASE("PyramidLevels: validation enforces strides and halving dims") {
  PyramidLevels good;
  int stride = 4, dim = 8;
  for (int i = 0; i < 4; ++i) {
    good.levels.push_back({Tensor({2, dim, dim}), stride});
    stride *= 2;
    dim /= 2;
  }
  CHECK_NOTHROW(good.validate());

  PyramidLevels bad_stride = good;
  bad_stride.levels[1].stride = 6;
  CHECK_THROWS_AS(bad_stride.validate(), std::invalid_argument);

  PyramidLevels bad_dims = good;
  bad_dims.levels[2].map = Tensor({2, 3, 3});
  CHECK_THROWS_AS(bad_dims.validate(), std::invalid_argument);

  PyramidLevels too_few;
  too_few.levels.push_back({Tensor({2, 8, 8}), 4});
  CHECK_THROWS_AS(too_few.validate(), std::invalid_argument);
}

TEST_CASE("bifpn_pass: output levels keep strides and shapes") {
  std::mt19937 rng(64);
  PyramidLevels p = random_pyramid(3, 32, rng);
  BifpnWeights w = random_bifpn(3, rng);
  PyramidLevels out = bifpn_pass(p, w);
  REQUIRE(out.levels.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(out.levels[static_cast<size_t>(i)].stride == p.levels[static_cast<size_t>(i)].stride);
    CHECK(out.levels[static_cast<size_t>(i)].map.shape() ==
          p.levels[static_cast<size_t>(i)].map.shape());
  }
}

TEST_CASE("bifpn_pass: matches the node-by-node oracle") {
  std::mt19937 rng(65);
  for (int trial = 0; trial < 5; ++trial) {
    PyramidLevels p = random_pyramid(3, 32, rng);
    BifpnWeights w = random_bifpn(3, rng);
    PyramidLevels out = bifpn_pass(p, w);
    std::vector<Tensor> maps;
    for (const auto& level : p.levels) maps.push_back(level.map);
    auto expect = oracles::bifpn_pass(maps, w);
    for (int level = 0; level < 4; ++level) {
      const auto& got = out.levels[static_cast<size_t>(level)].map;
      const auto& exp = expect[static_cast<size_t>(level)];
      REQUIRE(got.size() == static_cast<int64_t>(exp.data.size()));
      for (int64_t i = 0; i < got.size(); ++i)
        CHECK(rel_err(got[i], exp.data[static_cast<size_t>(i)]) < 1e-4);
    }
  }
}

TEST_CASE("bifpn_pass: zeroed lateral weight makes a level's raw input irrelevant") {
  std::mt19937 rng(66);
  PyramidLevels p = random_pyramid(2, 32, rng);
  BifpnWeights w = random_bifpn(2, rng);
  // node bu3 (index 5) fuses {P3, down(O2)}; zero the P3 coefficient
  w.nodes[5].weights.raw[0] = 0.0f;
  PyramidLevels base = bifpn_pass(p, w);

  PyramidLevels changed = p;
  changed.levels[3].map = random_tensor({2, 1, 1}, rng);
  PyramidLevels out = bifpn_pass(changed, w);
  // P3 still feeds the top-down chain through node td2, so only check that
  // the bu3 node ignored its first input by reconstructing with the oracle.
  std::vector<Tensor> maps;
  for (const auto& level : changed.levels) maps.push_back(level.map);
  auto expect = oracles::bifpn_pass(maps, w);
  for (int64_t i = 0; i < out.levels[3].map.size(); ++i)
    CHECK(rel_err(out.levels[3].map[i], expect[3].data[static_cast<size_t>(i)]) < 1e-4);
}

TEST_CASE("neck_refine: zero attention blocks preserve every level bit-exactly") {
  std::mt19937 rng(67);
  PyramidLevels p = random_pyramid(4, 32, rng);
  AttentionSpec spec{4, 2, 8};
  WindowAttentionWeights zero;
  zero.norm1_gamma = Tensor::full({4}, 1.0f);
  zero.norm1_beta = Tensor({4});
  zero.norm2_gamma = Tensor::full({4}, 1.0f);
  zero.norm2_beta = Tensor({4});
  zero.attn = {Tensor({4, 4}), Tensor({4, 4}), Tensor({4, 4}), Tensor({4, 4})};
  zero.mlp_w1 = Tensor({4, 8});
  zero.mlp_b1 = Tensor({8});
  zero.mlp_w2 = Tensor({8, 4});
  zero.mlp_b2 = Tensor({4});
  std::vector<WindowAttentionWeights> wa(4, zero);
  PyramidLevels out = neck_refine(p, wa, spec, 4, 4);
  REQUIRE(out.levels.size() == 4);
  for (int level = 0; level < 4; ++level) {
    CHECK(out.levels[static_cast<size_t>(level)].stride ==
          p.levels[static_cast<size_t>(level)].stride);
    for (int64_t i = 0; i < p.levels[static_cast<size_t>(level)].map.size(); ++i)
      CHECK(out.levels[static_cast<size_t>(level)].map[i] ==
            p.levels[static_cast<size_t>(level)].map[i]);
  }
}
