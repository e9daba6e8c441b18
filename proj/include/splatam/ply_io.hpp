#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatam/core.hpp"

namespace splatam {

/// Map serialization as binary little-endian PLY: per vertex x,y,z (double),
/// red,green,blue (float, [0,1]), radius (double), opacity (float).
inline void save_ply(const std::string& path, const GaussianMap& map) {
  const std::string tmp = path + ".part";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("ply: cannot open " + tmp + " for writing");
    out << "ply\n"
        << "format binary_little_endian 1.0\n"
        << "element vertex " << map.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "property float red\nproperty float green\nproperty float blue\n"
        << "property double radius\nproperty float opacity\n"
        << "end_header\n";
    for (const Gaussian& g : map.gaussians) {
      double xyz[3] = {g.center.x(), g.center.y(), g.center.z()};
      float rgb[3] = {static_cast<float>(g.color.x()), static_cast<float>(g.color.y()),
                      static_cast<float>(g.color.z())};
      double radius = g.radius;
      float opacity = static_cast<float>(g.opacity);
      out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
      out.write(reinterpret_cast<const char*>(&radius), sizeof(radius));
      out.write(reinterpret_cast<const char*>(&opacity), sizeof(opacity));
    }
    if (!out) throw std::runtime_error("ply: failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("ply: cannot move " + tmp + " into place: " + ec.message());
}

inline GaussianMap load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ply: cannot open " + path);

  std::string line;
  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) throw std::runtime_error("ply: truncated header in " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw std::runtime_error("ply: bad magic in " + path);
  if (next_line() != "format binary_little_endian 1.0")
    throw std::runtime_error("ply: unsupported format in " + path);

  std::size_t n = 0;
  std::vector<std::string> properties;
  while (true) {
    const std::string l = next_line();
    if (l == "end_header") break;
    std::istringstream iss(l);
    std::string kw;
    iss >> kw;
    if (kw == "comment") continue;
    if (kw == "element") {
      std::string name;
      iss >> name >> n;
      if (name != "vertex") throw std::runtime_error("ply: unexpected element in " + path);
    } else if (kw == "property") {
      std::string type, name;
      iss >> type >> name;
      properties.push_back(type + " " + name);
    } else {
      throw std::runtime_error("ply: unexpected header line in " + path);
    }
  }
  const std::vector<std::string> expected = {
      "double x",     "double y",      "double z",     "float red",
      "float green",  "float blue",    "double radius", "float opacity"};
  if (properties != expected) throw std::runtime_error("ply: unsupported vertex layout in " + path);

  GaussianMap map;
  map.gaussians.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double xyz[3];
    float rgb[3];
    double radius;
    float opacity;
    in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    in.read(reinterpret_cast<char*>(rgb), sizeof(rgb));
    in.read(reinterpret_cast<char*>(&radius), sizeof(radius));
    in.read(reinterpret_cast<char*>(&opacity), sizeof(opacity));
    if (!in) throw std::runtime_error("ply: truncated vertex data in " + path);
    map.gaussians[i].center = Vec3(xyz[0], xyz[1], xyz[2]);
    map.gaussians[i].color = Vec3(rgb[0], rgb[1], rgb[2]);
    map.gaussians[i].radius = radius;
    map.gaussians[i].opacity = opacity;
  }
  return map;
}

}  // namespace splatam
