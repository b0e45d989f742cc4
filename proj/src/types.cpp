// types.cpp

#include "splat4d/types.hpp"

#include "splat4d/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <unordered_set>

namespace splat4d {

Mat3 quat_to_matrix(const Quat& q_raw) {
  const Quat q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Quat quat_multiply(const Quat& a, const Quat& b) {
  return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 n = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return Quat(std::cos(0.5 * angle), n.x() * s, n.y() * s, n.z() * s);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

void GaussianCloud::validate() const {
  if (gaussians.empty()) throw DataError("cloud must contain at least one Gaussian");
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    const auto where = " (Gaussian " + std::to_string(i) + ")";
    if (!g.center.allFinite() || !g.rotation.allFinite() || !g.scale.allFinite() || !std::isfinite(g.opacity) ||
        !g.color.allFinite())
      throw DataError("non-finite parameter" + where);
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) throw DataError("rotation is not a unit quaternion" + where);
    if ((g.scale.array() <= 0.0).any()) throw DataError("scale must be strictly positive" + where);
    if (g.opacity < 0.0 || g.opacity > 1.0) throw DataError("opacity outside [0,1]" + where);
    if ((g.color.array() < 0.0).any() || (g.color.array() > 1.0).any()) throw DataError("color outside [0,1]" + where);
  }
  std::unordered_set<int> seen;
  for (int a : anchors) {
    if (a < 0 || static_cast<std::size_t>(a) >= gaussians.size())
      throw DataError("anchor index " + std::to_string(a) + " out of range");
    if (!seen.insert(a).second) throw DataError("duplicate anchor index " + std::to_string(a));
  }
}

void Camera::validate() const {
  if (!position.allFinite() || !target.allFinite() || !up.allFinite()) throw UsageError("camera has non-finite pose");
  if ((position - target).norm() == 0.0) throw UsageError("camera position equals target");
  if (!(near > 0.0)) throw UsageError("camera near plane must be positive");
  if (!(far > near)) throw UsageError("camera far plane must exceed near plane");
  if (!(vertical_fov > 0.0 && vertical_fov < std::numbers::pi)) throw UsageError("camera fov must be in (0, pi)");
  if (image_width <= 0 || image_height <= 0) throw UsageError("camera image size must be positive");
  const Vec3 forward = (target - position).normalized();
  if (forward.cross(up).norm() < 1e-12) throw UsageError("camera up vector is parallel to the view direction");
}

Mat3 Camera::world_to_camera() const {
  const Vec3 forward = (target - position).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 true_up = right.cross(forward);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = -true_up.transpose();
  r.row(2) = forward.transpose();
  return r;
}

double Camera::focal_y() const { return 0.5 * image_height / std::tan(0.5 * vertical_fov); }

void FrameSequence::validate() const {
  if (frames.empty()) throw DataError("frame sequence is empty");
  if (timesteps.size() != frames.size()) throw DataError("timestep count does not match frame count");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i].same_shape(frames[0]))
      throw DataError("frame " + std::to_string(i) + " has dimensions different from frame 0");
    if (i > 0 && !(timesteps[i] > timesteps[i - 1])) throw DataError("timesteps must be strictly increasing");
  }
}

std::vector<double> linspace_timesteps(int count) {
  std::vector<double> t(static_cast<std::size_t>(std::max(count, 0)), 0.0);
  for (int i = 1; i < count; ++i) t[i] = static_cast<double>(i) / (count - 1);
  return t;
}

KeypointTrack::KeypointTrack(int n_points, int n_frames, int width, int height)
    : n(n_points),
      t(n_frames),
      image_width(width),
      image_height(height),
      points(static_cast<std::size_t>(n_points) * n_frames, Vec2::Zero()),
      visible(static_cast<std::size_t>(n_points) * n_frames, 1),
      support(static_cast<std::size_t>(n_points), Vec2::Zero()) {}

void KeypointTrack::validate() const {
  if (n < 1 || t < 1) throw DataError("track needs n >= 1 and t >= 1");
  if (image_width <= 0 || image_height <= 0) throw DataError("track image size must be positive");
  const auto expected = static_cast<std::size_t>(n) * t;
  if (points.size() != expected || visible.size() != expected) throw DataError("track arrays do not match n * t");
  if (support.size() != static_cast<std::size_t>(n)) throw DataError("track support does not have n points");
  for (const Vec2& s : support)
    if (!s.allFinite()) throw DataError("track support point is not finite");
  for (int f = 0; f < t; ++f) {
    for (int i = 0; i < n; ++i) {
      const Vec2& p = point(f, i);
      if (!p.allFinite())
        throw DataError("frame " + std::to_string(f) + ": keypoint " + std::to_string(i) + " is not finite");
      if (is_visible(f, i) && (p.x() < 0.0 || p.y() < 0.0 || p.x() > image_width || p.y() > image_height))
        throw DataError("frame " + std::to_string(f) + ": visible keypoint " + std::to_string(i) +
                        " lies outside the image");
    }
  }
}

Camera make_orbit_camera(double azimuth_deg, double elevation_deg, double radius, int image_size,
                         std::optional<Vec3> fallback_up) {
  if (!(radius > 0.0)) throw UsageError("orbit radius must be positive");
  if (azimuth_deg < -180.0 || azimuth_deg > 180.0) throw UsageError("azimuth must lie in [-180, 180]");
  if (elevation_deg < -90.0 || elevation_deg > 90.0) throw UsageError("elevation must lie in [-90, 90]");
  if (image_size <= 0) throw UsageError("image size must be positive");

  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  Camera cam;
  cam.position = radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  cam.target = Vec3::Zero();
  cam.image_width = image_size;
  cam.image_height = image_size;
  if (std::abs(elevation_deg) == 90.0) {
    if (!fallback_up) throw UsageError("elevation of +-90 degrees requires a fallback up axis");
    cam.up = *fallback_up;
  }
  cam.validate();
  return cam;
}

GaussianCloud init_sphere_cloud(int count, double radius, std::uint64_t seed) {
  if (count < 1) throw UsageError("cloud needs at least one Gaussian");
  if (!(radius > 0.0)) throw UsageError("cloud radius must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double scale = radius * std::pow(static_cast<double>(count), -1.0 / 3.0);

  GaussianCloud cloud;
  cloud.gaussians.reserve(count);
  while (static_cast<int>(cloud.gaussians.size()) < count) {
    const Vec3 p(uni(rng), uni(rng), uni(rng));
    if (p.squaredNorm() > 1.0) continue;
    Gaussian g;
    g.center = radius * p;
    g.scale = Vec3::Constant(scale);
    cloud.gaussians.push_back(g);
  }
  return cloud;
}

std::vector<int> farthest_point_anchors(const GaussianCloud& cloud, int count) {
  const int m = static_cast<int>(cloud.size());
  if (count < 0 || count > m) throw UsageError("anchor count must lie in [0, M]");
  std::vector<int> out;
  if (count == 0) return out;

  Vec3 centroid = Vec3::Zero();
  for (const auto& g : cloud.gaussians) centroid += g.center;
  centroid /= m;

  auto argmax = [m](const std::vector<double>& d) {
    int best = 0;
    for (int i = 1; i < m; ++i)
      if (d[i] > d[best]) best = i;
    return best;
  };

  std::vector<double> dist(m);
  for (int i = 0; i < m; ++i) dist[i] = (cloud.gaussians[i].center - centroid).squaredNorm();
  out.push_back(argmax(dist));
  std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(out.size()) < count) {
    const Vec3& last = cloud.gaussians[out.back()].center;
    for (int i = 0; i < m; ++i) dist[i] = std::min(dist[i], (cloud.gaussians[i].center - last).squaredNorm());
    out.push_back(argmax(dist));
  }
  return out;
}

Mat3 covariance_of(const Gaussian& g) {
  const Mat3 m = quat_to_matrix(g.rotation) * g.scale.asDiagonal();
  return m * m.transpose();
}

}  // namespace splat4d
