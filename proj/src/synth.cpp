// synth.cpp

#include "splat4d/error.hpp"
#include "splat4d/losses.hpp"
#include "splat4d/rasterizer.hpp"
#include "splat4d/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace splat4d {

namespace {

// volatile keeps GCC 11's -O3 SLP pass from dropping the float round trip.
double to_float(double v) {
  volatile float f = static_cast<float>(v);
  return f;
}

Vec3 to_float(const Vec3& v) { return Vec3(to_float(v.x()), to_float(v.y()), to_float(v.z())); }

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace

std::string to_string(MotionKind k) {
  switch (k) {
    case MotionKind::rigid_rotation: return "rigid_rotation";
    case MotionKind::sinusoidal_articulation: return "sinusoidal_articulation";
    case MotionKind::translation: return "translation";
  }
  return "unknown";
}

MotionKind parse_motion_kind(const std::string& s) {
  if (s == "rigid_rotation") return MotionKind::rigid_rotation;
  if (s == "sinusoidal_articulation") return MotionKind::sinusoidal_articulation;
  if (s == "translation") return MotionKind::translation;
  throw UsageError("unknown motion kind '" + s + "'");
}

void SynthConfig::validate() const {
  if (keypoints < 1 || gaussians < keypoints) throw UsageError("synthetic scene needs gaussians >= keypoints >= 1");
  if (frames < 2) throw UsageError("synthetic scene needs at least two frames");
  if (image_size < 1) throw UsageError("image size must be positive");
  if (!(radius > 0.0) || !(camera_radius > radius)) throw UsageError("camera must orbit outside the cloud radius");
  if (!std::isfinite(amplitude)) throw UsageError("motion amplitude must be finite");
}

GaussianCloud apply_motion(const SynthConfig& cfg, const GaussianCloud& cloud, double tau) {
  const double wave = std::sin(2.0 * std::numbers::pi * tau);
  GaussianCloud out = cloud;
  for (Gaussian& g : out.gaussians) {
    switch (cfg.kind) {
      case MotionKind::rigid_rotation: {
        const double angle = cfg.amplitude * std::numbers::pi / 180.0 * wave;
        const Quat q = quat_from_axis_angle(Vec3::UnitY(), angle);
        g.center = quat_to_matrix(q) * g.center;
        g.rotation = quat_multiply(q, g.rotation);
        break;
      }
      case MotionKind::sinusoidal_articulation: {
        // Upper half bends about z; the weight ramps smoothly with height.
        const double weight = smoothstep(0.5 + g.center.y() / cfg.radius);
        const double angle = cfg.amplitude * std::numbers::pi / 180.0 * wave * weight;
        const Quat q = quat_from_axis_angle(Vec3::UnitZ(), angle);
        g.center = quat_to_matrix(q) * g.center;
        g.rotation = quat_multiply(q, g.rotation);
        break;
      }
      case MotionKind::translation:
        g.center += Vec3(cfg.amplitude * wave, 0.0, 0.0);
        break;
    }
  }
  return out;
}

SynthScene synth_scene(const SynthConfig& cfg) {
  cfg.validate();
  SynthScene s;
  s.cloud = init_sphere_cloud(cfg.gaussians, cfg.radius, cfg.seed);
  // Position-coded colors make motion visible; every value is float-representable
  // so the PLY round trip is exact.
  for (Gaussian& g : s.cloud.gaussians) {
    const Vec3 c = g.center / cfg.radius;
    g.color = to_float(Vec3(0.5 + 0.45 * c.x(), 0.5 + 0.45 * c.y(), 0.5 - 0.45 * c.z()).cwiseMax(0.0).cwiseMin(1.0));
    g.center = to_float(g.center);
    g.scale = to_float(g.scale);
    g.opacity = to_float(g.opacity);
  }
  s.cloud.anchors = farthest_point_anchors(s.cloud, cfg.keypoints);
  s.camera = make_orbit_camera(cfg.camera_azimuth, cfg.camera_elevation, cfg.camera_radius, cfg.image_size);

  s.frames.timesteps = linspace_timesteps(cfg.frames);
  std::vector<KeypointProjection> projections;
  for (double tau : s.frames.timesteps) {
    GaussianCloud state = apply_motion(cfg, s.cloud, tau);
    std::vector<Vec3> centers;
    centers.reserve(state.size());
    for (const Gaussian& g : state.gaussians) centers.push_back(g.center);
    projections.push_back(predict_keypoints(centers, state.anchors, s.camera));
    s.frames.frames.push_back(render(state, s.camera).output.image);
    s.states.push_back(std::move(state));
  }
  s.tracks = assemble_track(projections, s.camera, true);
  return s;
}

}  // namespace splat4d
