#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "splatam/config.hpp"
#include "splatam/core.hpp"
#include "splatam/diff.hpp"
#include "splatam/logging.hpp"
#include "splatam/optimizer.hpp"
#include "splatam/renderer.hpp"
#include "splatam/ssim.hpp"

namespace splatam {

struct Keyframe {
  RgbdFrame frame;
  CameraPose pose;  // estimated world-to-camera at tracking time
  std::size_t frame_index = 0;
};

struct SlamState {
  SlamConfig config;
  GaussianMap map;
  std::vector<Keyframe> keyframes;
  std::vector<CameraPose> trajectory;  // one per processed frame
  std::vector<double> timestamps;
  MapOptimizer map_optimizer;
  int n_threads = 1;

  explicit SlamState(const SlamConfig& cfg, int threads = 1)
      : config(cfg), map_optimizer(cfg.learning_rates), n_threads(threads) {
    config.validate();
  }
};

struct TrackResult {
  CameraPose pose;
  bool low_overlap = false;
  std::vector<double> losses;  // loss at each evaluated iterate
};

struct DensifyMask {
  MaskImage mask;
  int added_count = 0;
};

struct MapUpdateResult {
  std::vector<double> losses;  // one per mapping step
  int pruned_count = 0;
};

struct FrameStatus {
  std::size_t frame_index = 0;
  double timestamp = 0.0;
  bool low_overlap = false;
  double tracking_loss = 0.0;
  std::vector<double> tracking_losses;  // per tracking iteration
  std::vector<double> mapping_losses;   // per mapping iteration
  int densify_added = 0;
  int pruned = 0;
  std::size_t map_size = 0;
  bool is_keyframe = false;
};

namespace detail {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline void check_frame(const SlamState& state, const RgbdFrame& frame) {
  frame.validate();
  if (!state.keyframes.empty()) {
    const CameraIntrinsics& a = state.keyframes.front().frame.intrinsics;
    const CameraIntrinsics& b = frame.intrinsics;
    if (a.fx != b.fx || a.fy != b.fy || a.cx != b.cx || a.cy != b.cy || a.width != b.width ||
        a.height != b.height)
      throw std::invalid_argument("slam: frame intrinsics differ from the sequence");
  }
}

/// New Gaussian observed at pixel (x,y): color from the image, center at the
/// back-projected depth, half-pixel-scale world radius, half opacity.
inline Gaussian seed_gaussian(const RgbdFrame& frame, const CameraPose& world_from_view_inv,
                              int x, int y) {
  const double d = frame.depth.at(x, y);
  Gaussian g;
  g.center = world_to_camera(world_from_view_inv, unproject_pixel(frame.intrinsics, x, y, d));
  g.color = Vec3(frame.color.at(x, y, 0), frame.color.at(x, y, 1), frame.color.at(x, y, 2));
  g.opacity = 0.5;
  g.radius = d / frame.intrinsics.fx;  // projects to roughly one pixel
  return g;
}

}  // namespace detail

/// First-frame bootstrap: identity pose, one Gaussian per valid-depth pixel.
inline SlamState initialize(const RgbdFrame& first, const SlamConfig& cfg, int n_threads = 1) {
  first.validate();
  SlamState state(cfg, n_threads);
  const CameraPose identity;
  const CameraPose inv = pose_inverse(identity);
  for (int y = 0; y < first.intrinsics.height; ++y)
    for (int x = 0; x < first.intrinsics.width; ++x)
      if (first.depth_valid.at(x, y))
        state.map.gaussians.push_back(detail::seed_gaussian(first, inv, x, y));
  if (state.map.empty())
    throw std::invalid_argument("slam: first frame has no valid depth to initialize from");
  state.map.bump_generation();
  state.trajectory.push_back(identity);
  state.timestamps.push_back(first.timestamp);
  state.keyframes.push_back({first, identity, 0});
  return state;
}

/// Constant-velocity prediction from the last two estimated poses, applied
/// in pose space: the previous relative motion is replayed once more.
inline CameraPose propagate_pose(const SlamState& state) {
  if (state.trajectory.empty()) throw std::logic_error("slam: propagate before initialization");
  if (state.trajectory.size() == 1 || !state.config.velocity_propagation)
    return state.trajectory.back();
  const CameraPose& prev = state.trajectory[state.trajectory.size() - 2];
  const CameraPose& cur = state.trajectory.back();
  CameraPose out;
  out.translation = cur.translation + (cur.translation - prev.translation);
  const Quat delta = cur.rotation * prev.rotation.conjugate();
  out.rotation = (delta * cur.rotation).normalized();
  return out;
}

struct TrackingLoss {
  double loss = 0.0;
  int gated_pixels = 0;
  RenderGrads grads;  // populated only when requested
};

/// Per-pixel tracking objective: inside the silhouette gate, absolute depth
/// error plus down-weighted absolute color error. Returns the summed loss,
/// the gate population, and optionally its gradient w.r.t. the render.
inline TrackingLoss tracking_loss(const RenderOutput& out, const RgbdFrame& frame,
                                  const SlamConfig& cfg, bool with_grads) {
  const int W = frame.intrinsics.width;
  const int H = frame.intrinsics.height;
  TrackingLoss result;
  if (with_grads) {
    result.grads.d_color = ImageD(W, H, 3, 0.0);
    result.grads.d_depth = ImageD(W, H, 1, 0.0);
    result.grads.d_silhouette = ImageD(W, H, 1, 0.0);
  }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (cfg.tracking_use_silhouette && !(out.silhouette.at(x, y) > cfg.sil_thresh_tracking))
        continue;
      ++result.gated_pixels;
      if (frame.depth_valid.at(x, y)) {
        const double r = out.depth.at(x, y) - frame.depth.at(x, y);
        result.loss += std::abs(r);
        if (with_grads) result.grads.d_depth.at(x, y) = detail::sgn(r);
      }
      if (cfg.tracking_use_color) {
        for (int c = 0; c < 3; ++c) {
          const double r = out.color.at(x, y, c) - frame.color.at(x, y, c);
          result.loss += cfg.color_weight * std::abs(r);
          if (with_grads) result.grads.d_color.at(x, y, c) = cfg.color_weight * detail::sgn(r);
        }
      }
    }
  return result;
}

/// Pose-only optimization of the tracking loss, map frozen. Starts at the
/// constant-velocity prediction and keeps the best iterate seen. When too
/// little of the frame passes the silhouette gate the prediction is returned
/// unchanged and flagged, rather than optimizing against almost nothing.
inline TrackResult track(SlamState& state, const RgbdFrame& frame) {
  if (state.map.empty()) throw std::logic_error("slam: track with an empty map");
  detail::check_frame(state, frame);
  const CameraIntrinsics& intr = frame.intrinsics;
  RenderOptions opts;
  opts.n_threads = state.n_threads;

  TrackResult result;
  result.pose = propagate_pose(state);

  RenderOutput out = render(state.map, result.pose, intr, opts);
  TrackingLoss tl = tracking_loss(out, frame, state.config, true);
  const int total_pixels = intr.width * intr.height;
  if (tl.gated_pixels < 0.005 * total_pixels) {
    log_warn("slam: low overlap while tracking (" + std::to_string(tl.gated_pixels) + "/" +
             std::to_string(total_pixels) + " pixels), keeping predicted pose");
    result.low_overlap = true;
    result.losses.push_back(tl.loss);
    return result;
  }

  CameraPose pose = result.pose;
  double best_loss = tl.loss;
  result.losses.push_back(tl.loss);
  PoseOptimizer optimizer(state.config.learning_rates);
  for (int it = 0; it < state.config.tracking_iters; ++it) {
    PoseGradient pg;
    backward(state.map, pose, intr, out, tl.grads, nullptr, &pg, state.n_threads);
    optimizer.step(pose, pg);
    out = render(state.map, pose, intr, opts);
    tl = tracking_loss(out, frame, state.config, it + 1 < state.config.tracking_iters);
    result.losses.push_back(tl.loss);
    if (tl.loss < best_loss) {
      best_loss = tl.loss;
      result.pose = pose;
    }
  }
  return result;
}

/// Densification rule: a pixel wants new Gaussians when the map barely
/// covers it, or when ground truth lies in front of the rendered surface by
/// a margin far above the frame's median depth error. The margin test needs
/// a usable median, so it is skipped when fewer than 100 covered pixels
/// carry valid depth.
inline MaskImage densify_mask(const RenderOutput& out, const RgbdFrame& frame,
                              const SlamConfig& cfg) {
  const int W = frame.intrinsics.width;
  const int H = frame.intrinsics.height;
  std::vector<double> errors;
  errors.reserve(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (frame.depth_valid.at(x, y) && out.silhouette.at(x, y) >= 0.5)
        errors.push_back(std::abs(out.depth.at(x, y) - frame.depth.at(x, y)));
  double mde = 0.0;
  const bool mde_usable = errors.size() >= 100;
  if (mde_usable) {
    const std::size_t mid = errors.size() / 2;
    std::nth_element(errors.begin(), errors.begin() + mid, errors.end());
    mde = errors[mid];
  }

  MaskImage mask(W, H, 1, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool m = out.silhouette.at(x, y) < cfg.sil_thresh_densify;
      if (!m && mde_usable && frame.depth_valid.at(x, y)) {
        const double d_err = std::abs(out.depth.at(x, y) - frame.depth.at(x, y));
        m = frame.depth.at(x, y) < out.depth.at(x, y) && d_err > cfg.mde_factor * mde;
      }
      if (m) mask.at(x, y) = 1;
    }
  return mask;
}

/// Renders the tracked view, masks it, and seeds one Gaussian at every
/// masked pixel that has depth to place it with.
inline DensifyMask densify(SlamState& state, const RgbdFrame& frame,
                           const CameraPose& tracked_pose) {
  detail::check_frame(state, frame);
  RenderOptions opts;
  opts.n_threads = state.n_threads;
  opts.record_contribs = false;
  const RenderOutput out = render(state.map, tracked_pose, frame.intrinsics, opts);

  DensifyMask dm;
  dm.mask = densify_mask(out, frame, state.config);
  const CameraPose inv = pose_inverse(tracked_pose);
  for (int y = 0; y < frame.intrinsics.height; ++y)
    for (int x = 0; x < frame.intrinsics.width; ++x) {
      if (!dm.mask.at(x, y) || !frame.depth_valid.at(x, y)) continue;
      state.map.gaussians.push_back(detail::seed_gaussian(frame, inv, x, y));
      ++dm.added_count;
    }
  if (dm.added_count > 0) state.map.bump_generation();
  return dm;
}

/// Count of this frame's back-projected depth points (subsampled by stride)
/// that land inside the keyframe's view: in front of the camera and within
/// the image bounds.
inline int frustum_overlap(const RgbdFrame& frame, const CameraPose& frame_pose,
                           const CameraPose& keyframe_pose, int stride) {
  const CameraIntrinsics& intr = frame.intrinsics;
  const CameraPose inv = pose_inverse(frame_pose);
  int count = 0;
  for (int y = 0; y < intr.height; y += stride)
    for (int x = 0; x < intr.width; x += stride) {
      if (!frame.depth_valid.at(x, y)) continue;
      const Vec3 world =
          world_to_camera(inv, unproject_pixel(intr, x, y, frame.depth.at(x, y)));
      const Vec3 cam = world_to_camera(keyframe_pose, world);
      if (cam.z() <= kNearClip) continue;
      const double u = intr.fx * cam.x() / cam.z() + intr.cx;
      const double v = intr.fy * cam.y() / cam.z() + intr.cy;
      if (u >= 0.0 && u <= intr.width - 1 && v >= 0.0 && v <= intr.height - 1) ++count;
    }
  return count;
}

/// Mapping window: the most recent keyframe always participates, the rest
/// are ranked by how much of the current frame's geometry falls in their
/// view. Ties prefer newer keyframes. Returned indices are ascending; the
/// current frame itself joins the window in update_map.
inline std::vector<std::size_t> select_keyframes(const SlamState& state, const RgbdFrame& frame,
                                                 const CameraPose& tracked_pose, int stride = 8) {
  if (state.keyframes.empty()) throw std::logic_error("slam: keyframe selection with none stored");
  std::vector<std::size_t> selected;
  const std::size_t latest = state.keyframes.size() - 1;
  selected.push_back(latest);

  std::vector<std::pair<int, std::size_t>> ranked;  // (overlap, index)
  for (std::size_t i = 0; i < latest; ++i)
    ranked.emplace_back(
        frustum_overlap(frame, tracked_pose, state.keyframes[i].pose, stride), i);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;  // recency wins ties
  });
  const int extra = std::max(0, state.config.window_size - 2);
  for (int i = 0; i < extra && i < static_cast<int>(ranked.size()); ++i)
    selected.push_back(ranked[i].second);
  std::sort(selected.begin(), selected.end());
  return selected;
}

/// Map-side objective gradient for one view: unmasked absolute depth and
/// color errors plus the structural term on color.
inline double mapping_loss_grads(const RenderOutput& out, const RgbdFrame& frame,
                                 const SlamConfig& cfg, RenderGrads& grads) {
  const int W = frame.intrinsics.width;
  const int H = frame.intrinsics.height;
  grads.d_color = ImageD(W, H, 3, 0.0);
  grads.d_depth = ImageD(W, H, 1, 0.0);
  grads.d_silhouette = ImageD(W, H, 1, 0.0);
  double loss = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (frame.depth_valid.at(x, y)) {
        const double r = out.depth.at(x, y) - frame.depth.at(x, y);
        loss += std::abs(r);
        grads.d_depth.at(x, y) = detail::sgn(r);
      }
      for (int c = 0; c < 3; ++c) {
        const double r = out.color.at(x, y, c) - frame.color.at(x, y, c);
        loss += cfg.color_weight * std::abs(r);
        grads.d_color.at(x, y, c) = cfg.color_weight * detail::sgn(r);
      }
    }
  if (cfg.ssim_weight > 0.0) {
    ImageD d_ssim;
    const double s = ssim(out.color, frame.color, &d_ssim);
    loss += cfg.ssim_weight * (1.0 - s);
    for (std::size_t i = 0; i < d_ssim.size(); ++i)
      grads.d_color.data()[i] -= cfg.ssim_weight * d_ssim.data()[i];
  }
  return loss;
}

/// Gaussian-parameter optimization over the selected window, poses frozen.
/// Steps round-robin through the current frame plus the selected keyframes,
/// then prunes Gaussians that became invisible (vanishing opacity) or
/// degenerate (huge on-screen footprint in the current view).
inline MapUpdateResult update_map(SlamState& state, const RgbdFrame& frame,
                                  const CameraPose& tracked_pose,
                                  const std::vector<std::size_t>& selected) {
  if (selected.empty()) throw std::invalid_argument("slam: empty keyframe selection");
  const CameraIntrinsics& intr = frame.intrinsics;
  RenderOptions opts;
  opts.n_threads = state.n_threads;

  std::vector<const RgbdFrame*> view_frames{&frame};
  std::vector<CameraPose> view_poses{tracked_pose};
  for (std::size_t idx : selected) {
    view_frames.push_back(&state.keyframes.at(idx).frame);
    view_poses.push_back(state.keyframes.at(idx).pose);
  }

  MapUpdateResult result;
  RenderGrads grads;
  for (int it = 0; it < state.config.mapping_iters; ++it) {
    const std::size_t v = it % view_frames.size();
    const RenderOutput out = render(state.map, view_poses[v], intr, opts);
    result.losses.push_back(mapping_loss_grads(out, *view_frames[v], state.config, grads));
    MapGradients mg;
    backward(state.map, view_poses[v], intr, out, grads, &mg, nullptr, state.n_threads);
    state.map_optimizer.step(state.map, mg);
  }

  // cull: transparent anywhere, or oversized on screen in the current view
  const Mat3 R = tracked_pose.rotation.normalized().toRotationMatrix();
  std::vector<Gaussian> kept;
  kept.reserve(state.map.size());
  for (const Gaussian& g : state.map.gaussians) {
    if (g.opacity < state.config.prune_opacity_min) {
      ++result.pruned_count;
      continue;
    }
    ProjectedGaussian pg;
    if (project_gaussian(g, R, tracked_pose.translation, intr, &pg) &&
        pg.radius2d > state.config.prune_radius_max_px) {
      ++result.pruned_count;
      continue;
    }
    kept.push_back(g);
  }
  if (result.pruned_count > 0) {
    state.map.gaussians = std::move(kept);
    state.map.bump_generation();
  }
  return result;
}

/// One full frame: track the camera, densify where the map falls short,
/// optimize the map over the keyframe window, and do the bookkeeping.
inline FrameStatus process_frame(SlamState& state, const RgbdFrame& frame) {
  if (state.trajectory.empty()) throw std::logic_error("slam: process_frame before initialization");
  detail::check_frame(state, frame);
  FrameStatus status;
  status.frame_index = state.trajectory.size();
  status.timestamp = frame.timestamp;

  const TrackResult tr = track(state, frame);
  status.low_overlap = tr.low_overlap;
  status.tracking_loss = *std::min_element(tr.losses.begin(), tr.losses.end());
  status.tracking_losses = tr.losses;

  const DensifyMask dm = densify(state, frame, tr.pose);
  status.densify_added = dm.added_count;

  const auto selected = select_keyframes(state, frame, tr.pose);
  const MapUpdateResult mu = update_map(state, frame, tr.pose, selected);
  status.pruned = mu.pruned_count;
  status.mapping_losses = mu.losses;

  state.trajectory.push_back(tr.pose);
  state.timestamps.push_back(frame.timestamp);
  if (status.frame_index % static_cast<std::size_t>(state.config.keyframe_every) == 0) {
    state.keyframes.push_back({frame, tr.pose, status.frame_index});
    status.is_keyframe = true;
  }
  status.map_size = state.map.size();
  return status;
}

/// Convenience wrapper: feeds frames in order, initializing on the first.
class SlamPipeline {
 public:
  explicit SlamPipeline(const SlamConfig& cfg, int n_threads = 1)
      : config_(cfg), n_threads_(n_threads) {
    config_.validate();
  }

  FrameStatus process(const RgbdFrame& frame) {
    if (!state_) {
      state_.emplace(initialize(frame, config_, n_threads_));
      FrameStatus status;
      status.frame_index = 0;
      status.timestamp = frame.timestamp;
      status.is_keyframe = true;
      // fit the fresh seeds to the first frame, so tracking the next frame
      // sees a map whose silhouette is already saturated
      const MapUpdateResult mu = update_map(*state_, frame, state_->trajectory[0], {0});
      status.pruned = mu.pruned_count;
      status.mapping_losses = mu.losses;
      status.map_size = state_->map.size();
      return status;
    }
    return process_frame(*state_, frame);
  }

  bool initialized() const { return state_.has_value(); }
  const SlamState& state() const {
    if (!state_) throw std::logic_error("slam: pipeline not initialized");
    return *state_;
  }
  SlamState& state() {
    if (!state_) throw std::logic_error("slam: pipeline not initialized");
    return *state_;
  }

 private:
  SlamConfig config_;
  int n_threads_ = 1;
  std::optional<SlamState> state_;
};

}  // namespace splatam
