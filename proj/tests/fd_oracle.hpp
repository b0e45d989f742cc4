// fd_oracle.hpp
//
// Test-only helpers: central finite differences and random small scenes. Kept
// independent of the analytic backward code they are used to check.

#pragma once

#include "splat4d/rasterizer.hpp"
#include "splat4d/types.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace splat4d::testing {

inline double central_difference(double& param, double eps, const std::function<double()>& f) {
  const double saved = param;
  param = saved + eps;
  const double plus = f();
  param = saved - eps;
  const double minus = f();
  param = saved;
  return (plus - minus) / (2.0 * eps);
}

/// Relative error below `rel_tol`, or absolute error below `abs_tol` near zero.
inline bool gradients_agree(double analytic, double numeric, double rel_tol = 1e-3, double abs_tol = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_tol) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) < rel_tol;
}

struct AgreementTally {
  int total = 0;
  int agreed = 0;
  double worst_rel = 0.0;
  std::string worst_label;

  void add(double analytic, double numeric, const std::string& label, double rel_tol = 1e-3,
           double abs_tol = 1e-6) {
    ++total;
    if (gradients_agree(analytic, numeric, rel_tol, abs_tol)) {
      ++agreed;
    } else {
      const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
      if (rel > worst_rel) {
        worst_rel = rel;
        worst_label = label + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  double fraction() const { return total == 0 ? 1.0 : static_cast<double>(agreed) / total; }
};

struct RandomScene {
  GaussianCloud cloud;
  Camera camera;
  Image weights;  // fixed random per-pixel loss weights in [-1, 1]
};

inline RandomScene random_scene(std::uint64_t seed, int count = 8, int size = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  RandomScene s;
  s.camera = make_orbit_camera(180.0 * unit(rng), 40.0 * unit(rng), 3.0, size);
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    Vec3 p;
    do p = Vec3(unit(rng), unit(rng), unit(rng));
    while (p.norm() > 1.0);
    g.center = 0.8 * p;
    g.rotation = Quat(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
    g.scale = Vec3(0.08 + 0.27 * u01(rng), 0.08 + 0.27 * u01(rng), 0.08 + 0.27 * u01(rng));
    g.opacity = 0.1 + 0.8 * u01(rng);
    g.color = Vec3(u01(rng), u01(rng), u01(rng));
    s.cloud.gaussians.push_back(g);
  }
  s.weights = Image(size, size);
  for (double& w : s.weights.data) w = unit(rng);
  return s;
}

inline double weighted_sum(const Image& image, const Image& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < image.data.size(); ++i) acc += image.data[i] * weights.data[i];
  return acc;
}

}  // namespace splat4d::testing
