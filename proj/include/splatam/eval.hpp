#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "splatam/core.hpp"

namespace splatam {

enum class AlignMode { none, se3, sim3 };

struct TrajectoryAlignment {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return scale * (R * p) + t; }
};

/// Least-squares similarity (or rigid) transform mapping src points onto
/// dst. Fewer than three points, or degenerate spread, falls back to a pure
/// translation between the centroids.
inline TrajectoryAlignment align_point_sets(const std::vector<Vec3>& src,
                                            const std::vector<Vec3>& dst, bool with_scale) {
  if (src.size() != dst.size()) throw std::invalid_argument("align: point counts differ");
  if (src.empty()) throw std::invalid_argument("align: empty point sets");
  const double n = static_cast<double>(src.size());
  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (const auto& p : src) mu_src += p;
  for (const auto& p : dst) mu_dst += p;
  mu_src /= n;
  mu_dst /= n;

  TrajectoryAlignment out;
  if (src.size() < 3) {
    out.t = mu_dst - mu_src;
    return out;
  }

  Mat3 cov = Mat3::Zero();
  double var_src = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 xs = src[i] - mu_src;
    const Vec3 xd = dst[i] - mu_dst;
    cov += xd * xs.transpose();
    var_src += xs.squaredNorm();
  }
  cov /= n;
  var_src /= n;
  if (var_src < 1e-18) {  // all source points coincide
    out.t = mu_dst - mu_src;
    return out;
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d.z() = -1.0;
  out.R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  if (with_scale) out.scale = svd.singularValues().dot(d) / var_src;
  out.t = mu_dst - out.scale * (out.R * mu_src);
  return out;
}

struct AteReport {
  double rmse = 0.0;
  std::vector<double> per_frame_errors;  // meters, after alignment
  TrajectoryAlignment alignment;
};

/// Absolute trajectory error over camera centers. The estimated trajectory
/// is optionally aligned to ground truth first.
inline AteReport ate(const std::vector<CameraPose>& estimated,
                     const std::vector<CameraPose>& ground_truth,
                     AlignMode mode = AlignMode::none) {
  if (estimated.size() != ground_truth.size())
    throw std::invalid_argument("ate: trajectory lengths differ");
  if (estimated.empty()) throw std::invalid_argument("ate: empty trajectories");
  std::vector<Vec3> est, gt;
  est.reserve(estimated.size());
  gt.reserve(ground_truth.size());
  for (const auto& p : estimated) est.push_back(camera_center(p));
  for (const auto& p : ground_truth) gt.push_back(camera_center(p));

  AteReport report;
  if (mode != AlignMode::none)
    report.alignment = align_point_sets(est, gt, mode == AlignMode::sim3);

  double sq_sum = 0.0;
  report.per_frame_errors.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double e = (report.alignment.apply(est[i]) - gt[i]).norm();
    report.per_frame_errors.push_back(e);
    sq_sum += e * e;
  }
  report.rmse = std::sqrt(sq_sum / static_cast<double>(est.size()));
  return report;
}

/// Total path length of the ground-truth camera centers, used to express
/// trajectory error as a fraction of distance traveled.
inline double path_length(const std::vector<CameraPose>& poses) {
  double len = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i)
    len += (camera_center(poses[i]) - camera_center(poses[i - 1])).norm();
  return len;
}

/// Peak signal-to-noise ratio for images in [0,1]. Identical images give
/// +infinity.
inline double psnr(const ImageD& rendered, const ImageD& reference) {
  if (!rendered.same_shape(reference)) throw std::invalid_argument("psnr: image shapes differ");
  if (rendered.size() == 0) throw std::invalid_argument("psnr: empty images");
  double mse = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double d = rendered.data()[i] - reference.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(rendered.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// Mean absolute depth difference in meters over pixels the mask marks
/// valid. No valid pixel gives zero.
inline double depth_l1(const ImageD& rendered, const ImageD& reference, const MaskImage& valid) {
  if (!rendered.same_shape(reference) || rendered.width() != valid.width() ||
      rendered.height() != valid.height() || rendered.channels() != 1 || valid.channels() != 1)
    throw std::invalid_argument("depth_l1: shape mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < rendered.height(); ++y)
    for (int x = 0; x < rendered.width(); ++x) {
      if (!valid.at(x, y)) continue;
      sum += std::abs(rendered.at(x, y) - reference.at(x, y));
      ++count;
    }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace splatam
