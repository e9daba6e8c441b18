#pragma once

#include <cstddef>
#include <stdexcept>
#include <thread>
#include <vector>

#include "splatam/core.hpp"
#include "splatam/renderer.hpp"

namespace splatam {

/// Gradients of a scalar loss with respect to the raw map parameters
/// (world-space center, color, radius, opacity), one entry per Gaussian.
struct MapGradients {
  std::vector<Vec3> center;
  std::vector<Vec3> color;
  std::vector<double> radius;
  std::vector<double> opacity;

  void resize(std::size_t n) {
    center.assign(n, Vec3::Zero());
    color.assign(n, Vec3::Zero());
    radius.assign(n, 0.0);
    opacity.assign(n, 0.0);
  }
  std::size_t size() const { return radius.size(); }
};

/// Gradient with respect to the raw pose parameters. The quaternion part is
/// taken with respect to the stored (w,x,y,z) coefficients, including the
/// tangent projection of the internal normalization, so it matches finite
/// differences on the raw coefficients.
struct PoseGradient {
  Vec4 rotation_wxyz = Vec4::Zero();
  Vec3 translation = Vec3::Zero();
};

/// Upstream per-pixel loss gradients with respect to the render outputs.
struct RenderGrads {
  ImageD d_color;       // H x W x 3
  ImageD d_depth;       // H x W
  ImageD d_silhouette;  // H x W
};

namespace detail {

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

struct BackwardAccum {
  std::vector<Vec3> g_cam;  // loss gradient w.r.t. camera-space centers
  std::vector<Vec3> g_color;
  std::vector<double> g_radius;
  std::vector<double> g_opacity;

  void resize(std::size_t n) {
    g_cam.assign(n, Vec3::Zero());
    g_color.assign(n, Vec3::Zero());
    g_radius.assign(n, 0.0);
    g_opacity.assign(n, 0.0);
  }
  void add(const BackwardAccum& o) {
    for (std::size_t i = 0; i < g_cam.size(); ++i) {
      g_cam[i] += o.g_cam[i];
      g_color[i] += o.g_color[i];
      g_radius[i] += o.g_radius[i];
      g_opacity[i] += o.g_opacity[i];
    }
  }
};

/// Everything backward needs about one projected Gaussian, keyed by map index.
struct ProjectedRef {
  bool visible = false;
  Vec3 cam;       // camera-space center (X, Y, Z)
  Vec2 center2d;
  double radius2d = 0.0;
};

inline void backward_rows(const GaussianMap& map, const CameraIntrinsics& intr,
                          const std::vector<ProjectedRef>& refs, const RenderOutput& out,
                          const RenderGrads& upstream, int y0, int y1, BackwardAccum& acc) {
  const int W = intr.width;
  for (int y = y0; y < y1; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto [lo, hi] = out.contrib_range(x, y);
      if (lo == hi) continue;
      const Vec3 uc(upstream.d_color.at(x, y, 0), upstream.d_color.at(x, y, 1),
                    upstream.d_color.at(x, y, 2));
      const double ud = upstream.d_depth.at(x, y);
      const double us = upstream.d_silhouette.at(x, y);
      if (uc.isZero(0.0) && ud == 0.0 && us == 0.0) continue;

      // Reverse replay: a term's weight gradient needs the sum of the
      // attenuation terms behind it, so walk back-to-front keeping a suffix.
      double suffix = 0.0;
      for (int k = hi - 1; k >= lo; --k) {
        const PixelContrib& c = out.contribs[k];
        const int i = c.source_index;
        const ProjectedRef& ref = refs[i];
        const Gaussian& g = map.gaussians[i];
        const double f = c.weight;
        const double T = c.transmittance;
        const double wt = f * T;
        const double A = uc.dot(g.color) + ud * ref.cam.z() + us;

        acc.g_color[i] += uc * wt;
        acc.g_cam[i].z() += ud * wt;  // depth channel reads camera z directly

        const double g_f = A * T - suffix / (1.0 - f);
        suffix += A * wt;

        // Through the clamp the weight is constant, so nothing flows to the
        // footprint parameters.
        if (f >= kWeightClamp) continue;

        const double sigma = ref.radius2d;
        const double dx = x - ref.center2d.x();
        const double dy = y - ref.center2d.y();
        const double inv_s2 = 1.0 / (sigma * sigma);
        acc.g_opacity[i] += g_f * f / g.opacity;
        const double g_cx = g_f * f * dx * inv_s2;
        const double g_cy = g_f * f * dy * inv_s2;
        const double g_sigma = g_f * f * (dx * dx + dy * dy) * inv_s2 / sigma;

        // Chain the screen-space quantities through the projection:
        //   cx2d = fx X / Z + cx, cy2d = fy Y / Z + cy, sigma = fx r / Z.
        const double Z = ref.cam.z();
        const double inv_z = 1.0 / Z;
        acc.g_cam[i].x() += g_cx * intr.fx * inv_z;
        acc.g_cam[i].y() += g_cy * intr.fy * inv_z;
        acc.g_cam[i].z() -= (g_cx * intr.fx * ref.cam.x() + g_cy * intr.fy * ref.cam.y() +
                             g_sigma * intr.fx * g.radius) *
                            inv_z * inv_z;
        acc.g_radius[i] += g_sigma * intr.fx * inv_z;
      }
    }
  }
}

}  // namespace detail

/// Analytic backward pass through the renderer. Consumes the contribution
/// lists recorded by a forward render of (map, pose) and accumulates into
/// map_grads and/or pose_grads (either may be null). Outputs are overwritten.
inline void backward(const GaussianMap& map, const CameraPose& pose, const CameraIntrinsics& intr,
                     const RenderOutput& out, const RenderGrads& upstream,
                     MapGradients* map_grads, PoseGradient* pose_grads, int n_threads = 1) {
  if (out.offsets.size() != static_cast<std::size_t>(intr.width * intr.height) + 1)
    throw std::invalid_argument("backward: render output has no contribution lists");
  if (!upstream.d_color.same_shape(out.color) || !upstream.d_depth.same_shape(out.depth) ||
      !upstream.d_silhouette.same_shape(out.silhouette))
    throw std::invalid_argument("backward: upstream gradient shapes do not match render");

  const std::size_t n = map.size();
  const Mat3 R = pose.rotation.normalized().toRotationMatrix();
  std::vector<detail::ProjectedRef> refs(n);
  for (std::size_t i = 0; i < n; ++i) {
    ProjectedGaussian pg;
    Vec3 cam;
    refs[i].visible = project_gaussian(map.gaussians[i], R, pose.translation, intr, &pg, &cam);
    refs[i].cam = cam;
    refs[i].center2d = pg.center2d;
    refs[i].radius2d = pg.radius2d;
  }

  const int H = intr.height;
  const int workers = std::max(1, std::min(n_threads, H));
  std::vector<detail::BackwardAccum> accums(workers);
  for (auto& a : accums) a.resize(n);
  if (workers == 1) {
    detail::backward_rows(map, intr, refs, out, upstream, 0, H, accums[0]);
  } else {
    const int chunk = (H + workers - 1) / workers;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      const int y0 = w * chunk;
      const int y1 = std::min(H, y0 + chunk);
      if (y0 >= y1) break;
      pool.emplace_back([&, w, y0, y1] {
        detail::backward_rows(map, intr, refs, out, upstream, y0, y1, accums[w]);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (int w = 1; w < workers; ++w) accums[0].add(accums[w]);
  const detail::BackwardAccum& acc = accums[0];

  if (map_grads) {
    map_grads->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      map_grads->center[i] = R.transpose() * acc.g_cam[i];
      map_grads->color[i] = acc.g_color[i];
      map_grads->radius[i] = acc.g_radius[i];
      map_grads->opacity[i] = acc.g_opacity[i];
    }
  }

  if (pose_grads) {
    pose_grads->rotation_wxyz.setZero();
    pose_grads->translation.setZero();
    const Quat q = pose.rotation.normalized();
    const double qw = q.w();
    const Vec3 qu(q.x(), q.y(), q.z());
    Vec4 g_unit = Vec4::Zero();  // gradient w.r.t. the normalized quaternion
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& gp = acc.g_cam[i];
      if (gp.isZero(0.0)) continue;
      pose_grads->translation += gp;
      // R v = v + 2 w (u x v) + 2 u x (u x v) for unit q = (w, u).
      const Vec3 v = map.gaussians[i].center;
      const Vec3 uxv = qu.cross(v);
      g_unit[0] += 2.0 * uxv.dot(gp);
      const Mat3 J_u = -2.0 * qw * detail::cross_matrix(v) - 2.0 * detail::cross_matrix(uxv) -
                       2.0 * detail::cross_matrix(qu) * detail::cross_matrix(v);
      g_unit.tail<3>() += J_u.transpose() * gp;
    }
    // Raw coefficients are normalized before use; push the gradient through
    // q = q_raw / |q_raw|.
    const Vec4 q_vec(q.w(), q.x(), q.y(), q.z());
    const double raw_norm = pose.rotation.norm();
    pose_grads->rotation_wxyz =
        (g_unit - q_vec * q_vec.dot(g_unit)) / (raw_norm > 0.0 ? raw_norm : 1.0);
  }
}

/// Central-difference derivative of f() with respect to *x.
template <typename F>
double finite_diff(F&& f, double* x, double step = 1e-5) {
  const double x0 = *x;
  *x = x0 + step;
  const double fp = f();
  *x = x0 - step;
  const double fm = f();
  *x = x0;
  return (fp - fm) / (2.0 * step);
}

}  // namespace splatam
