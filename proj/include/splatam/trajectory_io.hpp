#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "splatam/core.hpp"

namespace splatam {

/// Timestamped trajectory in the plain-text format common to RGB-D
/// benchmark tooling: "timestamp tx ty tz qx qy qz qw" per line, pose given
/// camera-to-world. Internally poses are world-to-camera, so writing
/// inverts: c = -R^T t, q_cw = conj(q).
inline void save_trajectory(const std::string& path, const std::vector<double>& timestamps,
                            const std::vector<CameraPose>& poses) {
  if (timestamps.size() != poses.size())
    throw std::invalid_argument("trajectory: timestamp/pose counts differ");
  const std::string tmp = path + ".part";
  std::FILE* fp = std::fopen(tmp.c_str(), "w");
  if (!fp) throw std::runtime_error("trajectory: cannot open " + tmp + " for writing");
  std::fprintf(fp, "# timestamp tx ty tz qx qy qz qw\n");
  const auto nz = [](double v) { return v == 0.0 ? 0.0 : v; };  // drop negative zero
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Vec3 c = camera_center(poses[i]);
    const Quat q_cw = poses[i].rotation.normalized().conjugate();
    std::fprintf(fp, "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", timestamps[i], nz(c.x()),
                 nz(c.y()), nz(c.z()), nz(q_cw.x()), nz(q_cw.y()), nz(q_cw.z()), nz(q_cw.w()));
  }
  if (std::fclose(fp) != 0) throw std::runtime_error("trajectory: failed writing " + tmp);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw std::runtime_error("trajectory: cannot move " + tmp + " into place: " + ec.message());
}

/// Loads a trajectory file, returning world-to-camera poses. Comment lines
/// start with '#'; malformed data lines are an error.
inline std::pair<std::vector<double>, std::vector<CameraPose>> load_trajectory(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trajectory: cannot open " + path);
  std::vector<double> timestamps;
  std::vector<CameraPose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream iss(line);
    iss >> std::ws;
    if (iss.eof() || iss.peek() == '#') continue;
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(iss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("trajectory: malformed line " + std::to_string(line_no) + " in " +
                               path);
    Quat q_cw(qw, qx, qy, qz);
    if (q_cw.norm() < 1e-12)
      throw std::runtime_error("trajectory: zero quaternion on line " + std::to_string(line_no) +
                               " in " + path);
    q_cw.normalize();
    CameraPose pose;
    pose.rotation = q_cw.conjugate();
    pose.translation = -(pose.rotation * Vec3(tx, ty, tz));
    timestamps.push_back(ts);
    poses.push_back(pose);
  }
  return {std::move(timestamps), std::move(poses)};
}

}  // namespace splatam
