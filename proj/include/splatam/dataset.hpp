#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "splatam/core.hpp"
#include "splatam/logging.hpp"
#include "splatam/png_io.hpp"
#include "splatam/trajectory_io.hpp"

namespace splatam {

struct DatasetFrameRef {
  double timestamp = 0.0;
  std::string color_path;
  std::string depth_path;
};

/// A sequence on disk: per-frame image paths plus shared intrinsics. Frames
/// are decoded lazily, one at a time.
struct SequenceSource {
  CameraIntrinsics intrinsics;
  double depth_scale = 5000.0;
  std::vector<DatasetFrameRef> frames;
  std::vector<CameraPose> gt_poses;  // empty, or one world-to-camera pose per frame

  std::size_t size() const { return frames.size(); }
  bool has_ground_truth() const { return gt_poses.size() == frames.size() && !frames.empty(); }

  RgbdFrame load_frame(std::size_t i) const {
    if (i >= frames.size()) throw std::out_of_range("dataset: frame index out of range");
    RgbdFrame frame;
    frame.intrinsics = intrinsics;
    frame.timestamp = frames[i].timestamp;
    frame.color = read_png_rgb8(frames[i].color_path);
    frame.depth = read_png_gray16(frames[i].depth_path, depth_scale);
    frame.depth_valid = MaskImage(frame.depth.width(), frame.depth.height(), 1, 0);
    for (int y = 0; y < frame.depth.height(); ++y)
      for (int x = 0; x < frame.depth.width(); ++x)
        frame.depth_valid.at(x, y) = frame.depth.at(x, y) > 0.0 ? 1 : 0;
    frame.validate();
    return frame;
  }
};

namespace detail {

struct TimedPath {
  double timestamp;
  std::string path;
};

inline std::vector<TimedPath> read_list_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open " + path);
  std::vector<TimedPath> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream iss(line);
    iss >> std::ws;
    if (iss.eof() || iss.peek() == '#') continue;
    TimedPath tp;
    if (!(iss >> tp.timestamp >> tp.path))
      throw std::runtime_error("dataset: malformed line " + std::to_string(line_no) + " in " +
                               path);
    out.push_back(tp);
  }
  return out;
}

/// Index of the entry in sorted timestamps nearest to t, or -1 when the
/// nearest entry is further away than max_dt.
inline int nearest_timestamp(const std::vector<double>& sorted, double t, double max_dt) {
  if (sorted.empty()) return -1;
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  int best = -1;
  double best_dt = max_dt;
  if (it != sorted.end() && std::abs(*it - t) <= best_dt) {
    best = static_cast<int>(it - sorted.begin());
    best_dt = std::abs(*it - t);
  }
  if (it != sorted.begin() && std::abs(*(it - 1) - t) <= best_dt) {
    best = static_cast<int>(it - sorted.begin()) - 1;
  }
  return best;
}

inline void attach_ground_truth(SequenceSource& seq, const std::string& gt_path, double max_dt) {
  const auto [gt_ts, gt_poses] = load_trajectory(gt_path);
  std::vector<CameraPose> matched;
  matched.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    const int j = nearest_timestamp(gt_ts, f.timestamp, max_dt);
    if (j < 0) {
      log_warn("dataset: no ground-truth pose within " + std::to_string(max_dt) + "s of frame at " +
               std::to_string(f.timestamp) + ", dropping ground truth");
      return;
    }
    matched.push_back(gt_poses[j]);
  }
  seq.gt_poses = std::move(matched);
}

}  // namespace detail

/// Loads a benchmark-style RGB-D directory: rgb.txt and depth.txt list
/// files, 16-bit depth at 5000 counts per meter, optional groundtruth.txt.
/// Color and depth streams are associated by nearest timestamp within
/// max_dt. Intrinsics default to the common 640x480 sensor calibration and
/// can be overridden by the caller afterwards.
inline SequenceSource load_tum(const std::string& dir, int max_frames = -1, double max_dt = 0.02) {
  SequenceSource seq;
  seq.intrinsics.fx = 525.0;
  seq.intrinsics.fy = 525.0;
  seq.intrinsics.cx = 319.5;
  seq.intrinsics.cy = 239.5;
  seq.intrinsics.width = 640;
  seq.intrinsics.height = 480;
  seq.depth_scale = 5000.0;

  const auto rgb = detail::read_list_file(dir + "/rgb.txt");
  const auto depth = detail::read_list_file(dir + "/depth.txt");
  std::vector<double> depth_ts;
  depth_ts.reserve(depth.size());
  for (const auto& d : depth) depth_ts.push_back(d.timestamp);

  std::vector<bool> depth_used(depth.size(), false);
  for (const auto& r : rgb) {
    const int j = detail::nearest_timestamp(depth_ts, r.timestamp, max_dt);
    if (j < 0 || depth_used[j]) continue;
    depth_used[j] = true;
    seq.frames.push_back({r.timestamp, dir + "/" + r.path, dir + "/" + depth[j].path});
    if (max_frames > 0 && static_cast<int>(seq.frames.size()) >= max_frames) break;
  }
  if (seq.frames.empty()) throw std::runtime_error("dataset: no associated frames in " + dir);

  if (std::filesystem::exists(dir + "/groundtruth.txt"))
    detail::attach_ground_truth(seq, dir + "/groundtruth.txt", max_dt);
  return seq;
}

/// Loads the directory layout written by the synthetic generator:
/// intrinsics.json plus consecutively numbered color/%06d.png and
/// depth/%06d.png pairs, optional groundtruth.txt. Frame timestamps are
/// index/30 by convention; ground-truth rows carry the same stamps.
inline SequenceSource load_simple(const std::string& dir, int max_frames = -1) {
  std::ifstream in(dir + "/intrinsics.json");
  if (!in) throw std::runtime_error("dataset: cannot open " + dir + "/intrinsics.json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("dataset: failed to parse " + dir + "/intrinsics.json: " + e.what());
  }
  SequenceSource seq;
  try {
    seq.intrinsics.fx = j.at("fx").get<double>();
    seq.intrinsics.fy = j.at("fy").get<double>();
    seq.intrinsics.cx = j.at("cx").get<double>();
    seq.intrinsics.cy = j.at("cy").get<double>();
    seq.intrinsics.width = j.at("width").get<int>();
    seq.intrinsics.height = j.at("height").get<int>();
    seq.depth_scale = j.at("depth_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("dataset: bad intrinsics.json in " + dir + ": " + e.what());
  }
  seq.intrinsics.validate();
  if (!(seq.depth_scale > 0.0))
    throw std::runtime_error("dataset: depth_scale must be positive in " + dir);

  for (std::size_t i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    DatasetFrameRef ref;
    ref.timestamp = static_cast<double>(i) / 30.0;
    ref.color_path = dir + "/color/" + name;
    ref.depth_path = dir + "/depth/" + name;
    if (!std::filesystem::exists(ref.color_path)) break;
    if (!std::filesystem::exists(ref.depth_path))
      throw std::runtime_error("dataset: missing " + ref.depth_path);
    seq.frames.push_back(ref);
    if (max_frames > 0 && static_cast<int>(seq.frames.size()) >= max_frames) break;
  }
  if (seq.frames.empty())
    throw std::runtime_error("dataset: no color/%06d.png frames found in " + dir);

  if (std::filesystem::exists(dir + "/groundtruth.txt"))
    detail::attach_ground_truth(seq, dir + "/groundtruth.txt", 1e-6);
  return seq;
}

/// Picks a loader from the directory contents.
inline SequenceSource load_sequence(const std::string& dir, int max_frames = -1) {
  if (std::filesystem::exists(dir + "/intrinsics.json")) return load_simple(dir, max_frames);
  if (std::filesystem::exists(dir + "/rgb.txt")) return load_tum(dir, max_frames);
  throw std::runtime_error("dataset: " + dir +
                           " has neither intrinsics.json nor rgb.txt, cannot infer layout");
}

}  // namespace splatam
