#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scene_utils.hpp"
#include "splatam/renderer.hpp"

using namespace splatam;

namespace {

CameraIntrinsics vga_intrinsics() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 600.0;
  intr.cx = 320.0;
  intr.cy = 240.0;
  intr.width = 640;
  intr.height = 480;
  return intr;
}

double max_abs_diff(const ImageD& a, const ImageD& b) {
  EXPECT_TRUE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Project, PinholeExample) {
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0, 0, 2);
  g.radius = 0.1;
  map.gaussians.push_back(g);
  const auto projected = project(map, CameraPose{}, vga_intrinsics());
  ASSERT_EQ(projected.size(), 1u);
  EXPECT_DOUBLE_EQ(projected[0].center2d.x(), 320.0);
  EXPECT_DOUBLE_EQ(projected[0].center2d.y(), 240.0);
  EXPECT_DOUBLE_EQ(projected[0].radius2d, 30.0);
  EXPECT_DOUBLE_EQ(projected[0].depth, 2.0);
  EXPECT_EQ(projected[0].index, 0);
}

TEST(Project, OffCenterPoint) {
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0.5, -0.25, 2.5);
  g.radius = 0.2;
  map.gaussians.push_back(g);
  const auto projected = project(map, CameraPose{}, vga_intrinsics());
  ASSERT_EQ(projected.size(), 1u);
  EXPECT_DOUBLE_EQ(projected[0].center2d.x(), 600.0 * 0.5 / 2.5 + 320.0);
  EXPECT_DOUBLE_EQ(projected[0].center2d.y(), 600.0 * -0.25 / 2.5 + 240.0);
  EXPECT_DOUBLE_EQ(projected[0].radius2d, 600.0 * 0.2 / 2.5);
}

TEST(Project, BehindCameraExcluded) {
  GaussianMap map;
  Gaussian front, behind, at_plane;
  front.center = Vec3(0, 0, 1);
  behind.center = Vec3(0, 0, -1);
  at_plane.center = Vec3(0, 0, 0);
  map.gaussians = {front, behind, at_plane};
  const auto projected = project(map, CameraPose{}, vga_intrinsics());
  ASSERT_EQ(projected.size(), 1u);
  EXPECT_EQ(projected[0].index, 0);
}

TEST(Project, DepthSortNearestFirst) {
  GaussianMap map;
  for (double z : {3.0, 1.0, 2.0}) {
    Gaussian g;
    g.center = Vec3(0, 0, z);
    map.gaussians.push_back(g);
  }
  const auto projected = project(map, CameraPose{}, vga_intrinsics());
  ASSERT_EQ(projected.size(), 3u);
  EXPECT_EQ(projected[0].index, 1);
  EXPECT_EQ(projected[1].index, 2);
  EXPECT_EQ(projected[2].index, 0);
}

TEST(Project, EqualDepthKeepsMapOrder) {
  GaussianMap map;
  for (int i = 0; i < 4; ++i) {
    Gaussian g;
    g.center = Vec3(0.1 * i, 0, 2.0);
    map.gaussians.push_back(g);
  }
  const auto projected = project(map, CameraPose{}, vga_intrinsics());
  ASSERT_EQ(projected.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(projected[i].index, i);
}

TEST(Project, PoseMovesDepth) {
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0, 0, 2);
  map.gaussians.push_back(g);
  CameraPose pose;
  pose.translation = Vec3(0, 0, 1.5);  // camera moved back: depth grows
  const auto projected = project(map, pose, vga_intrinsics());
  ASSERT_EQ(projected.size(), 1u);
  EXPECT_DOUBLE_EQ(projected[0].depth, 3.5);
}

TEST(PixelWeight, CenterAndFalloff) {
  ProjectedGaussian g;
  g.center2d = Vec2(10, 10);
  g.radius2d = 2.0;
  g.opacity = 0.8;
  EXPECT_DOUBLE_EQ(pixel_weight(g, 10, 10), 0.8);
  // one standard deviation out
  EXPECT_DOUBLE_EQ(pixel_weight(g, 12, 10), 0.8 * std::exp(-0.5));
  EXPECT_DOUBLE_EQ(pixel_weight(g, 10, 8), 0.8 * std::exp(-0.5));
}

TEST(PixelWeight, HardCutoff) {
  ProjectedGaussian g;
  g.center2d = Vec2(0, 0);
  g.radius2d = 1.0;
  g.opacity = 1.0;
  EXPECT_GT(pixel_weight(g, 2.999, 0), 0.0);
  EXPECT_EQ(pixel_weight(g, 3.001, 0), 0.0);
  EXPECT_GT(pixel_weight(g, 0, -2.999), 0.0);
  EXPECT_EQ(pixel_weight(g, 0, -3.001), 0.0);
}

TEST(PixelWeight, ClampKeepsTransmittancePositive) {
  ProjectedGaussian g;
  g.center2d = Vec2(5, 5);
  g.radius2d = 3.0;
  g.opacity = 1.0;
  EXPECT_DOUBLE_EQ(pixel_weight(g, 5, 5), 0.9999);
}

TEST(Render, SingleGaussianCompositing) {
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0, 0, 2);
  g.radius = 0.1;
  g.opacity = 0.6;
  g.color = Vec3(0.9, 0.5, 0.1);
  map.gaussians.push_back(g);
  const auto intr = vga_intrinsics();
  const auto out = render(map, CameraPose{}, intr);
  // at the projected center the weight equals the opacity
  EXPECT_DOUBLE_EQ(out.silhouette.at(320, 240), 0.6);
  EXPECT_DOUBLE_EQ(out.depth.at(320, 240), 2.0 * 0.6);
  EXPECT_DOUBLE_EQ(out.color.at(320, 240, 0), 0.9 * 0.6);
  EXPECT_DOUBLE_EQ(out.color.at(320, 240, 1), 0.5 * 0.6);
  EXPECT_DOUBLE_EQ(out.color.at(320, 240, 2), 0.1 * 0.6);
  // one sigma to the right (r2d = 30 px)
  const double f = 0.6 * std::exp(-0.5);
  EXPECT_DOUBLE_EQ(out.silhouette.at(350, 240), f);
  // far outside the cutoff circle
  EXPECT_DOUBLE_EQ(out.silhouette.at(100, 240), 0.0);
  EXPECT_DOUBLE_EQ(out.depth.at(100, 240), 0.0);
}

TEST(Render, TwoGaussianOcclusion) {
  GaussianMap map;
  Gaussian near, far;
  near.center = Vec3(0, 0, 2);
  near.radius = 0.1;
  near.opacity = 0.7;
  near.color = Vec3(1, 0, 0);
  far.center = Vec3(0, 0, 3);
  far.radius = 0.15;
  far.opacity = 0.5;
  far.color = Vec3(0, 1, 0);
  map.gaussians = {far, near};  // map order is not depth order
  const auto out = render(map, CameraPose{}, vga_intrinsics());
  const double f1 = 0.7;             // nearer, composited first
  const double f2 = 0.5;
  EXPECT_DOUBLE_EQ(out.color.at(320, 240, 0), f1);
  EXPECT_DOUBLE_EQ(out.color.at(320, 240, 1), f2 * (1.0 - f1));
  EXPECT_DOUBLE_EQ(out.depth.at(320, 240), 2.0 * f1 + 3.0 * f2 * (1.0 - f1));
  EXPECT_DOUBLE_EQ(out.silhouette.at(320, 240), f1 + f2 * (1.0 - f1));
}

TEST(Render, EarlyTerminationStopsCompositing) {
  GaussianMap map;
  for (double z : {1.0, 1.5, 2.0, 2.5}) {
    Gaussian g;
    g.center = Vec3(0, 0, z);
    g.radius = 0.2;
    g.opacity = 0.98;
    map.gaussians.push_back(g);
  }
  const auto out = render(map, CameraPose{}, vga_intrinsics());
  // Transmittance after three layers is 0.02^3 = 8e-6 < 1e-4, so the fourth
  // Gaussian never contributes at the center pixel.
  const auto [lo, hi] = out.contrib_range(320, 240);
  ASSERT_EQ(hi - lo, 3);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(out.contribs[lo + k].source_index, k);
    EXPECT_NEAR(out.contribs[lo + k].transmittance, std::pow(0.02, k), 1e-12);
  }
}

TEST(Render, ContribListsMatchAccumulators) {
  std::mt19937_64 rng(7);
  const auto s = testutil::random_scene(rng, 30);
  const auto out = render(s.map, s.pose, s.intr);
  ASSERT_EQ(out.offsets.size(), static_cast<std::size_t>(s.intr.width * s.intr.height + 1));
  EXPECT_EQ(out.offsets.back(), static_cast<int>(out.contribs.size()));
  for (int y = 0; y < s.intr.height; ++y) {
    for (int x = 0; x < s.intr.width; ++x) {
      const auto [lo, hi] = out.contrib_range(x, y);
      ASSERT_LE(lo, hi);
      double sil = 0.0;
      double t = 1.0;
      for (int k = lo; k < hi; ++k) {
        const auto& c = out.contribs[k];
        ASSERT_DOUBLE_EQ(c.transmittance, t);
        sil += c.weight * t;
        t *= 1.0 - c.weight;
      }
      ASSERT_NEAR(out.silhouette.at(x, y), sil, 1e-12);
    }
  }
}

TEST(Render, EmptyMapRendersZeros) {
  const auto intr = testutil::small_intrinsics();
  const auto out = render(GaussianMap{}, CameraPose{}, intr);
  for (std::size_t i = 0; i < out.color.size(); ++i) EXPECT_EQ(out.color.data()[i], 0.0);
  for (std::size_t i = 0; i < out.depth.size(); ++i) EXPECT_EQ(out.depth.data()[i], 0.0);
  EXPECT_TRUE(out.contribs.empty());
  EXPECT_EQ(out.offsets.size(), static_cast<std::size_t>(intr.width * intr.height + 1));
}

TEST(Render, TiledMatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 60);
    const auto s = testutil::random_scene(rng, n, 40, 28);  // tile grid with ragged edges
    const auto tiled = render(s.map, s.pose, s.intr);
    const auto ref = render_reference(s.map, s.pose, s.intr);
    EXPECT_LE(max_abs_diff(tiled.color, ref.color), 1e-6);
    EXPECT_LE(max_abs_diff(tiled.depth, ref.depth), 1e-6);
    EXPECT_LE(max_abs_diff(tiled.silhouette, ref.silhouette), 1e-6);
    ASSERT_EQ(tiled.offsets, ref.offsets);
    ASSERT_EQ(tiled.contribs.size(), ref.contribs.size());
    for (std::size_t i = 0; i < tiled.contribs.size(); ++i) {
      ASSERT_EQ(tiled.contribs[i].source_index, ref.contribs[i].source_index);
      ASSERT_NEAR(tiled.contribs[i].weight, ref.contribs[i].weight, 1e-12);
      ASSERT_NEAR(tiled.contribs[i].transmittance, ref.contribs[i].transmittance, 1e-12);
    }
  }
}

TEST(Render, MultiThreadMatchesSingleThread) {
  std::mt19937_64 rng(13);
  const auto s = testutil::random_scene(rng, 40, 50, 35);
  RenderOptions opts1;
  opts1.n_threads = 1;
  RenderOptions opts4;
  opts4.n_threads = 4;
  const auto a = render(s.map, s.pose, s.intr, opts1);
  const auto b = render(s.map, s.pose, s.intr, opts4);
  EXPECT_TRUE(a.color == b.color);
  EXPECT_TRUE(a.depth == b.depth);
  EXPECT_TRUE(a.silhouette == b.silhouette);
  EXPECT_EQ(a.offsets, b.offsets);
}

TEST(Render, RecordingOffLeavesContribsEmpty) {
  std::mt19937_64 rng(17);
  const auto s = testutil::random_scene(rng, 20);
  RenderOptions opts;
  opts.record_contribs = false;
  const auto a = render(s.map, s.pose, s.intr, opts);
  const auto b = render(s.map, s.pose, s.intr);
  EXPECT_TRUE(a.contribs.empty());
  EXPECT_TRUE(a.color == b.color);
  EXPECT_TRUE(a.silhouette == b.silhouette);
}
