#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "splatam/config.hpp"
#include "splatam/core.hpp"
#include "splatam/diff.hpp"

namespace splatam {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment state for one flat parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }

  /// One bias-corrected update of params given grads. A zero gradient with
  /// zero accumulated moments leaves the parameter untouched.
  void step(double* params, const double* grads, std::size_t n, double lr,
            const AdamParams& ap = {}) {
    ++t;
    const double bc1 = 1.0 - std::pow(ap.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(ap.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = ap.beta1 * m[i] + (1.0 - ap.beta1) * grads[i];
      v[i] = ap.beta2 * v[i] + (1.0 - ap.beta2) * grads[i] * grads[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + ap.eps);
    }
  }
};

inline double logit(double p) {
  const double q = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(q / (1.0 - q));
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Adam over the map parameters. Centers and colors step in raw space;
/// opacity steps through a logit and radius through a log, which keeps both
/// in their valid ranges without projection. Moments reset whenever the map
/// generation or size changes, since rows then no longer line up.
class MapOptimizer {
 public:
  explicit MapOptimizer(const LearningRates& lrs) : lrs_(lrs) {}

  void step(GaussianMap& map, const MapGradients& grads) {
    const std::size_t n = map.size();
    if (n != n_ || map.generation != generation_) {
      n_ = n;
      generation_ = map.generation;
      center_.resize(3 * n);
      color_.resize(3 * n);
      opacity_.resize(n);
      radius_.resize(n);
    }

    std::vector<double> buf(3 * n);
    std::vector<double> gbuf(3 * n);

    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) {
        buf[3 * i + a] = map.gaussians[i].center[a];
        gbuf[3 * i + a] = grads.center[i][a];
      }
    center_.step(buf.data(), gbuf.data(), 3 * n, lrs_.center);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) map.gaussians[i].center[a] = buf[3 * i + a];

    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) {
        buf[3 * i + a] = map.gaussians[i].color[a];
        gbuf[3 * i + a] = grads.color[i][a];
      }
    color_.step(buf.data(), gbuf.data(), 3 * n, lrs_.color);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a)
        map.gaussians[i].color[a] = std::clamp(buf[3 * i + a], 0.0, 1.0);

    buf.resize(n);
    gbuf.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double o = map.gaussians[i].opacity;
      buf[i] = logit(o);
      gbuf[i] = grads.opacity[i] * o * (1.0 - o);  // chain through the sigmoid
    }
    opacity_.step(buf.data(), gbuf.data(), n, lrs_.opacity_logit);
    for (std::size_t i = 0; i < n; ++i) map.gaussians[i].opacity = sigmoid(buf[i]);

    for (std::size_t i = 0; i < n; ++i) {
      const double r = map.gaussians[i].radius;
      buf[i] = std::log(r);
      gbuf[i] = grads.radius[i] * r;  // chain through the exponential
    }
    radius_.step(buf.data(), gbuf.data(), n, lrs_.log_radius);
    for (std::size_t i = 0; i < n; ++i) map.gaussians[i].radius = std::exp(buf[i]);
  }

  void reset() {
    n_ = static_cast<std::size_t>(-1);
    generation_ = static_cast<std::uint64_t>(-1);
  }

 private:
  LearningRates lrs_;
  std::size_t n_ = static_cast<std::size_t>(-1);
  std::uint64_t generation_ = static_cast<std::uint64_t>(-1);
  AdamState center_, color_, opacity_, radius_;
};

/// Adam over the seven raw pose parameters, quaternion renormalized after
/// every step.
class PoseOptimizer {
 public:
  explicit PoseOptimizer(const LearningRates& lrs) : lrs_(lrs) {
    rotation_.resize(4);
    translation_.resize(3);
  }

  void step(CameraPose& pose, const PoseGradient& grads) {
    Vec4 q = pose.quaternion_wxyz();
    rotation_.step(q.data(), grads.rotation_wxyz.data(), 4, lrs_.pose_rotation);
    Vec3 t = pose.translation;
    translation_.step(t.data(), grads.translation.data(), 3, lrs_.pose_translation);
    pose = CameraPose::from_wxyz(q, t);
    pose.renormalize();
  }

  void reset() {
    rotation_.resize(4);
    translation_.resize(3);
  }

 private:
  LearningRates lrs_;
  AdamState rotation_, translation_;
};

}  // namespace splatam
