#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "splatam/core.hpp"
#include "splatam/png_io.hpp"
#include "splatam/renderer.hpp"
#include "splatam/trajectory_io.hpp"

namespace splatam {

struct SynthParams {
  int n_gaussians = 300;
  int n_frames = 20;
  int width = 64;
  int height = 48;
  double focal = 60.0;
  double step_m = 0.01;          // per-frame camera translation
  double step_deg = 1.0;         // per-frame camera rotation
  double min_visible_frac = 0.5;  // required in every frame
  std::uint64_t seed = 1234;
};

struct SynthSequence {
  CameraIntrinsics intrinsics;
  GaussianMap map;  // ground-truth scene
  std::vector<CameraPose> poses;  // world-to-camera, one per frame
  std::vector<double> timestamps;
};

namespace detail {

/// Camera path with ~step_m translation and ~step_deg rotation per frame.
/// The heading and rotation axis precess slowly, so a constant-velocity
/// extrapolation is close but never exact.
inline std::vector<CameraPose> synth_trajectory(const SynthParams& p) {
  std::vector<CameraPose> poses;
  Vec3 center = Vec3::Zero();
  Quat r_wc = Quat::Identity();  // camera-to-world orientation
  const double step_rad = p.step_deg * M_PI / 180.0;
  for (int i = 0; i < p.n_frames; ++i) {
    const Quat q_wc = r_wc.normalized();
    CameraPose pose;
    pose.rotation = q_wc.conjugate();
    pose.translation = -(pose.rotation * center);
    poses.push_back(pose);

    const Vec3 heading =
        Vec3(std::cos(0.2 * i), 0.4 * std::sin(0.17 * i), 0.25 * std::sin(0.11 * i)).normalized();
    center += p.step_m * heading;
    const Vec3 axis =
        Vec3(0.2 * std::sin(0.1 * i), 1.0, 0.1 * std::cos(0.13 * i)).normalized();
    r_wc = r_wc * Quat(Eigen::AngleAxisd(step_rad, axis));
  }
  return poses;
}

inline int count_visible(const GaussianMap& map, const CameraPose& pose,
                         const CameraIntrinsics& intr) {
  int visible = 0;
  const Mat3 R = pose.rotation.normalized().toRotationMatrix();
  for (const Gaussian& g : map.gaussians) {
    ProjectedGaussian pg;
    if (!project_gaussian(g, R, pose.translation, intr, &pg)) continue;
    if (pg.center2d.x() >= 0 && pg.center2d.x() <= intr.width - 1 && pg.center2d.y() >= 0 &&
        pg.center2d.y() <= intr.height - 1)
      ++visible;
  }
  return visible;
}

}  // namespace detail

/// Generates a random scene plus a smooth camera path through it. The scene
/// is resampled until at least min_visible_frac of the Gaussians project
/// into every frame, so no frame is ever underconstrained.
inline SynthSequence synth_generate(const SynthParams& p) {
  if (p.n_gaussians < 1 || p.n_frames < 1) throw std::invalid_argument("synth: counts must be >= 1");
  SynthSequence seq;
  seq.intrinsics.fx = seq.intrinsics.fy = p.focal;
  seq.intrinsics.cx = p.width / 2.0;
  seq.intrinsics.cy = p.height / 2.0;
  seq.intrinsics.width = p.width;
  seq.intrinsics.height = p.height;
  seq.intrinsics.validate();
  seq.poses = detail::synth_trajectory(p);
  for (int i = 0; i < p.n_frames; ++i) seq.timestamps.push_back(i / 30.0);

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  std::uniform_real_distribution<double> uy(-0.75, 0.75);
  std::uniform_real_distribution<double> uz(1.5, 3.5);
  std::uniform_real_distribution<double> ucol(0.05, 1.0);
  std::uniform_real_distribution<double> urad(0.06, 0.18);
  std::uniform_real_distribution<double> uopa(0.7, 0.999);

  for (int attempt = 0; attempt < 50; ++attempt) {
    GaussianMap map;
    map.gaussians.reserve(p.n_gaussians);
    for (int i = 0; i < p.n_gaussians; ++i) {
      Gaussian g;
      g.center = Vec3(ux(rng), uy(rng), uz(rng));
      g.color = Vec3(ucol(rng), ucol(rng), ucol(rng));
      g.radius = urad(rng);
      g.opacity = uopa(rng);
      map.gaussians.push_back(g);
    }
    bool ok = true;
    for (const CameraPose& pose : seq.poses) {
      if (detail::count_visible(map, pose, seq.intrinsics) <
          p.min_visible_frac * p.n_gaussians) {
        ok = false;
        break;
      }
    }
    if (ok) {
      seq.map = std::move(map);
      return seq;
    }
  }
  throw std::runtime_error("synth: could not sample a scene visible along the whole path");
}

/// Renders the ground-truth observations for every frame. Depth validity
/// marks pixels the scene actually covers (accumulated opacity >= 0.5).
inline std::vector<RgbdFrame> synth_render_frames(const SynthSequence& seq, int n_threads = 1) {
  std::vector<RgbdFrame> frames;
  frames.reserve(seq.poses.size());
  RenderOptions opts;
  opts.n_threads = n_threads;
  opts.record_contribs = false;
  for (std::size_t i = 0; i < seq.poses.size(); ++i) {
    const RenderOutput out = render(seq.map, seq.poses[i], seq.intrinsics, opts);
    RgbdFrame f;
    f.intrinsics = seq.intrinsics;
    f.timestamp = seq.timestamps[i];
    f.color = out.color;
    for (std::size_t k = 0; k < f.color.size(); ++k)
      f.color.data()[k] = std::clamp(f.color.data()[k], 0.0, 1.0);
    f.depth = out.depth;
    f.depth_valid = MaskImage(seq.intrinsics.width, seq.intrinsics.height, 1, 0);
    for (int y = 0; y < seq.intrinsics.height; ++y)
      for (int x = 0; x < seq.intrinsics.width; ++x)
        f.depth_valid.at(x, y) = out.silhouette.at(x, y) >= 0.5 ? 1 : 0;
    f.validate();
    frames.push_back(std::move(f));
  }
  return frames;
}

/// Writes a sequence to the simple directory layout: intrinsics.json,
/// color/%06d.png, depth/%06d.png, groundtruth.txt.
inline void save_simple_dataset(const std::string& dir, const SynthSequence& seq,
                                const std::vector<RgbdFrame>& frames,
                                double depth_scale = 5000.0) {
  if (frames.size() != seq.poses.size())
    throw std::invalid_argument("synth: frame/pose counts differ");
  std::filesystem::create_directories(dir + "/color");
  std::filesystem::create_directories(dir + "/depth");

  nlohmann::json j{{"fx", seq.intrinsics.fx},   {"fy", seq.intrinsics.fy},
                   {"cx", seq.intrinsics.cx},   {"cy", seq.intrinsics.cy},
                   {"width", seq.intrinsics.width}, {"height", seq.intrinsics.height},
                   {"depth_scale", depth_scale}};
  {
    std::ofstream out(dir + "/intrinsics.json");
    if (!out) throw std::runtime_error("synth: cannot write " + dir + "/intrinsics.json");
    out << j.dump(2) << "\n";
  }

  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png_rgb8(dir + "/color/" + name, frames[i].color);
    // invalid pixels must store the zero missing-depth code
    ImageD masked = frames[i].depth;
    for (int y = 0; y < masked.height(); ++y)
      for (int x = 0; x < masked.width(); ++x)
        if (!frames[i].depth_valid.at(x, y)) masked.at(x, y) = 0.0;
    write_png_gray16(dir + "/depth/" + name, masked, depth_scale);
  }

  save_trajectory(dir + "/groundtruth.txt", seq.timestamps, seq.poses);
}

}  // namespace splatam
