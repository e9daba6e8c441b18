#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "splatam/core.hpp"
#include "splatam/parallel.hpp"

namespace splatam {

inline constexpr double kNearClip = 1e-4;        // minimum camera-space depth
inline constexpr double kWeightClamp = 0.9999;   // keeps transmittance strictly positive
inline constexpr double kCutoffSigmas = 3.0;     // support radius in standard deviations
inline constexpr double kMinTransmittance = 1e-4;  // early compositing stop
inline constexpr int kTileSize = 16;

/// One map Gaussian after perspective projection. Isotropic Gaussians stay
/// isotropic under this model: the screen footprint is a circle whose
/// standard deviation is radius2d pixels.
struct ProjectedGaussian {
  int index = -1;  // position in the source map
  Vec2 center2d = Vec2::Zero();
  double depth = 0.0;     // camera-space z
  double radius2d = 0.0;  // pixels
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

/// Projects one Gaussian; returns false when it falls behind the near
/// plane. cam_point receives the camera-space center when non-null.
inline bool project_gaussian(const Gaussian& g, const Mat3& R, const Vec3& t,
                             const CameraIntrinsics& intr, ProjectedGaussian* pg,
                             Vec3* cam_point = nullptr) {
  const Vec3 p = R * g.center + t;
  if (cam_point) *cam_point = p;
  if (p.z() <= kNearClip) return false;
  pg->depth = p.z();
  pg->center2d = Vec2(intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy);
  pg->radius2d = intr.fx * g.radius / p.z();
  pg->opacity = g.opacity;
  pg->color = g.color;
  return true;
}

/// Projects every Gaussian in front of the camera (depth > kNearClip) and
/// sorts nearest-first. Ties keep map order so renders are deterministic.
inline std::vector<ProjectedGaussian> project(const GaussianMap& map, const CameraPose& pose,
                                              const CameraIntrinsics& intr) {
  const Mat3 R = pose.rotation.normalized().toRotationMatrix();
  std::vector<ProjectedGaussian> out;
  out.reserve(map.size());
  for (int i = 0; i < static_cast<int>(map.size()); ++i) {
    ProjectedGaussian pg;
    if (!project_gaussian(map.gaussians[i], R, pose.translation, intr, &pg)) continue;
    pg.index = i;
    out.push_back(pg);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
                     return a.depth < b.depth;
                   });
  return out;
}

/// Opacity-scaled falloff exp(-dist^2 / (2 sigma^2)) at sample point (px,py).
/// Exactly zero beyond kCutoffSigmas, clamped to kWeightClamp above.
inline double pixel_weight(const ProjectedGaussian& g, double px, double py) {
  const double dx = px - g.center2d.x();
  const double dy = py - g.center2d.y();
  const double dist2 = dx * dx + dy * dy;
  const double sigma = g.radius2d;
  if (dist2 > (kCutoffSigmas * sigma) * (kCutoffSigmas * sigma)) return 0.0;
  const double w = g.opacity * std::exp(-dist2 / (2.0 * sigma * sigma));
  return std::min(w, kWeightClamp);
}

/// One surviving compositing term at a pixel: which Gaussian, its weight f,
/// and the transmittance accumulated in front of it.
struct PixelContrib {
  int source_index = -1;
  double weight = 0.0;
  double transmittance = 0.0;
};

struct RenderOutput {
  ImageD color;       // H x W x 3
  ImageD depth;       // H x W
  ImageD silhouette;  // H x W, accumulated opacity in [0,1)

  // Per-pixel compositing terms in front-to-back order, flattened row-major
  // (compressed-sparse-row layout). Empty when recording was disabled.
  std::vector<PixelContrib> contribs;
  std::vector<int> offsets;  // W*H + 1 entries

  std::pair<int, int> contrib_range(int x, int y) const {
    const int p = y * color.width() + x;
    return {offsets[p], offsets[p + 1]};
  }
};

struct RenderOptions {
  int n_threads = 1;
  bool record_contribs = true;
};

namespace detail {

struct PixelAccum {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  double sil = 0.0;
};

/// Front-to-back alpha compositing over a depth-ordered candidate list.
/// Both render paths funnel through here so their semantics cannot drift.
inline PixelAccum composite_pixel(const std::vector<const ProjectedGaussian*>& candidates,
                                  double px, double py, std::vector<PixelContrib>* contribs) {
  PixelAccum acc;
  double transmittance = 1.0;
  for (const ProjectedGaussian* g : candidates) {
    const double w = pixel_weight(*g, px, py);
    if (w <= 0.0) continue;
    const double wt = w * transmittance;
    acc.color += g->color * wt;
    acc.depth += g->depth * wt;
    acc.sil += wt;
    if (contribs) contribs->push_back({g->index, w, transmittance});
    transmittance *= 1.0 - w;
    if (transmittance < kMinTransmittance) break;
  }
  return acc;
}

inline void store_pixel(RenderOutput& out, int x, int y, const PixelAccum& acc) {
  out.color.at(x, y, 0) = acc.color[0];
  out.color.at(x, y, 1) = acc.color[1];
  out.color.at(x, y, 2) = acc.color[2];
  out.depth.at(x, y) = acc.depth;
  out.silhouette.at(x, y) = acc.sil;
}

inline void flatten_contribs(RenderOutput& out,
                             const std::vector<std::vector<PixelContrib>>& per_pixel,
                             bool recorded) {
  const int n = out.depth.width() * out.depth.height();
  out.offsets.assign(n + 1, 0);
  if (!recorded) return;
  for (int p = 0; p < n; ++p)
    out.offsets[p + 1] = out.offsets[p] + static_cast<int>(per_pixel[p].size());
  out.contribs.reserve(out.offsets[n]);
  for (int p = 0; p < n; ++p)
    out.contribs.insert(out.contribs.end(), per_pixel[p].begin(), per_pixel[p].end());
}

}  // namespace detail

/// Tiled renderer. Pixels sample at integer coordinates (x, y). Gaussians
/// are binned into kTileSize x kTileSize tiles by their cutoff circle, then
/// each tile composites its pixels front to back.
inline RenderOutput render(const GaussianMap& map, const CameraPose& pose,
                           const CameraIntrinsics& intr, const RenderOptions& opts = {}) {
  intr.validate();
  const int W = intr.width;
  const int H = intr.height;
  RenderOutput out;
  out.color = ImageD(W, H, 3, 0.0);
  out.depth = ImageD(W, H, 1, 0.0);
  out.silhouette = ImageD(W, H, 1, 0.0);

  const std::vector<ProjectedGaussian> projected = project(map, pose, intr);

  const int tiles_x = (W + kTileSize - 1) / kTileSize;
  const int tiles_y = (H + kTileSize - 1) / kTileSize;
  std::vector<std::vector<const ProjectedGaussian*>> tile_lists(
      static_cast<std::size_t>(tiles_x) * tiles_y);

  // Insertion follows the depth-sorted order, so each tile list stays sorted.
  for (const ProjectedGaussian& g : projected) {
    const double reach = kCutoffSigmas * g.radius2d;
    const int tx0 = std::max(0, static_cast<int>(std::floor((g.center2d.x() - reach) / kTileSize)));
    const int tx1 = std::min(tiles_x - 1,
                             static_cast<int>(std::floor((g.center2d.x() + reach) / kTileSize)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((g.center2d.y() - reach) / kTileSize)));
    const int ty1 = std::min(tiles_y - 1,
                             static_cast<int>(std::floor((g.center2d.y() + reach) / kTileSize)));
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) {
        // Exact circle vs. tile sample rectangle test.
        const double x_lo = tx * kTileSize;
        const double x_hi = std::min(W - 1, tx * kTileSize + kTileSize - 1);
        const double y_lo = ty * kTileSize;
        const double y_hi = std::min(H - 1, ty * kTileSize + kTileSize - 1);
        const double nx = std::clamp(g.center2d.x(), x_lo, x_hi);
        const double ny = std::clamp(g.center2d.y(), y_lo, y_hi);
        const double dx = g.center2d.x() - nx;
        const double dy = g.center2d.y() - ny;
        if (dx * dx + dy * dy <= reach * reach)
          tile_lists[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(&g);
      }
    }
  }

  std::vector<std::vector<PixelContrib>> per_pixel;
  if (opts.record_contribs) per_pixel.resize(static_cast<std::size_t>(W) * H);

  parallel_for(0, tiles_x * tiles_y, opts.n_threads, [&](int t) {
    const int tx = t % tiles_x;
    const int ty = t / tiles_x;
    const auto& candidates = tile_lists[t];
    const int x_end = std::min(W, (tx + 1) * kTileSize);
    const int y_end = std::min(H, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < y_end; ++y) {
      for (int x = tx * kTileSize; x < x_end; ++x) {
        std::vector<PixelContrib>* dst =
            opts.record_contribs ? &per_pixel[static_cast<std::size_t>(y) * W + x] : nullptr;
        detail::store_pixel(out, x, y, detail::composite_pixel(candidates, x, y, dst));
      }
    }
  });

  detail::flatten_contribs(out, per_pixel, opts.record_contribs);
  return out;
}

/// Brute-force renderer: every pixel composites the full depth-sorted list.
/// Same per-pixel semantics as render(); kept as the correctness oracle.
inline RenderOutput render_reference(const GaussianMap& map, const CameraPose& pose,
                                     const CameraIntrinsics& intr, bool record_contribs = true) {
  intr.validate();
  const int W = intr.width;
  const int H = intr.height;
  RenderOutput out;
  out.color = ImageD(W, H, 3, 0.0);
  out.depth = ImageD(W, H, 1, 0.0);
  out.silhouette = ImageD(W, H, 1, 0.0);

  const std::vector<ProjectedGaussian> projected = project(map, pose, intr);
  std::vector<const ProjectedGaussian*> all;
  all.reserve(projected.size());
  for (const ProjectedGaussian& g : projected) all.push_back(&g);

  std::vector<std::vector<PixelContrib>> per_pixel;
  if (record_contribs) per_pixel.resize(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      std::vector<PixelContrib>* dst =
          record_contribs ? &per_pixel[static_cast<std::size_t>(y) * W + x] : nullptr;
      detail::store_pixel(out, x, y, detail::composite_pixel(all, x, y, dst));
    }
  }
  detail::flatten_contribs(out, per_pixel, record_contribs);
  return out;
}

}  // namespace splatam
