#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatam/image.hpp"

namespace splatam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// One isotropic map primitive: position, view-independent color, scalar
/// radius and opacity. Eight scalars in total.
struct Gaussian {
  Vec3 center = Vec3::Zero();   // world units
  Vec3 color = Vec3::Zero();    // per-channel in [0,1]
  double radius = 1.0;          // world units, > 0
  double opacity = 0.5;         // in [0,1]
};

/// The scene map: an ordered collection of Gaussians plus a generation
/// counter that is bumped on every structural edit (densify/prune).
struct GaussianMap {
  std::vector<Gaussian> gaussians;
  std::uint64_t generation = 0;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
  void bump_generation() { ++generation; }
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (width < 1 || height < 1) throw std::invalid_argument("intrinsics: image dims must be >= 1");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
      throw std::invalid_argument("intrinsics: principal point outside image");
  }
};

/// World-to-camera rigid transform, stored as unit quaternion + translation.
/// Applying the pose maps a world point x to R*x + t; the camera center in
/// world coordinates is -R^T * t.
struct CameraPose {
  Quat rotation = Quat::Identity();  // world-to-camera
  Vec3 translation = Vec3::Zero();

  CameraPose() = default;
  CameraPose(const Quat& q, const Vec3& t) : rotation(q), translation(t) {}

  void renormalize() { rotation.normalize(); }

  /// Raw quaternion coefficients in (w,x,y,z) order.
  Vec4 quaternion_wxyz() const {
    return Vec4(rotation.w(), rotation.x(), rotation.y(), rotation.z());
  }
  static CameraPose from_wxyz(const Vec4& q, const Vec3& t) {
    return CameraPose(Quat(q[0], q[1], q[2], q[3]), t);
  }
};

inline Vec3 world_to_camera(const CameraPose& pose, const Vec3& point) {
  const Mat3 R = pose.rotation.normalized().toRotationMatrix();
  return R * point + pose.translation;
}

inline CameraPose pose_inverse(const CameraPose& pose) {
  const Quat q = pose.rotation.normalized();
  const Quat q_inv = q.conjugate();
  return CameraPose(q_inv, -(q_inv * pose.translation));
}

inline Vec3 camera_center(const CameraPose& pose) {
  const Quat q = pose.rotation.normalized();
  return -(q.conjugate() * pose.translation);
}

/// Back-projects pixel (u,v) at the given depth into camera coordinates.
inline Vec3 unproject_pixel(const CameraIntrinsics& intr, double u, double v, double depth) {
  return Vec3((u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth);
}

/// One RGB-D observation. Color channels and depth are stored as 64-bit
/// scalars; depth_valid marks pixels with usable sensor depth.
struct RgbdFrame {
  ImageD color;           // H x W x 3, in [0,1]
  ImageD depth;           // H x W, meters
  MaskImage depth_valid;  // H x W, nonzero where depth is usable
  CameraIntrinsics intrinsics;
  double timestamp = 0.0;

  void validate() const {
    intrinsics.validate();
    if (color.width() != intrinsics.width || color.height() != intrinsics.height || color.channels() != 3)
      throw std::invalid_argument("frame: color buffer does not match intrinsics");
    if (!depth.same_shape(ImageD(intrinsics.width, intrinsics.height, 1)) ||
        depth.channels() != 1)
      throw std::invalid_argument("frame: depth buffer does not match intrinsics");
    if (depth_valid.width() != intrinsics.width || depth_valid.height() != intrinsics.height ||
        depth_valid.channels() != 1)
      throw std::invalid_argument("frame: validity mask does not match intrinsics");
    for (int y = 0; y < depth.height(); ++y)
      for (int x = 0; x < depth.width(); ++x)
        if (depth_valid.at(x, y) && !(depth.at(x, y) > 0.0))
          throw std::invalid_argument("frame: non-positive depth marked valid");
  }
};

}  // namespace splatam
