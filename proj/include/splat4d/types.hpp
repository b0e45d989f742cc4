// types.hpp
//
// Scene, camera, image and keypoint data model shared by every module.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace splat4d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Unit quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4d;

inline Quat identity_quat() { return Quat(1.0, 0.0, 0.0, 0.0); }

/// Rotation matrix of q / |q|. q need not be normalized.
Mat3 quat_to_matrix(const Quat& q);

/// Hamilton product a * b, both (w, x, y, z).
Quat quat_multiply(const Quat& a, const Quat& b);

/// Quaternion for a rotation of `angle` radians about `axis`.
Quat quat_from_axis_angle(const Vec3& axis, double angle);

/// A single anisotropic Gaussian. Values are held in their natural (constrained)
/// domain; the optimizer keeps unconstrained log/logit buffers and maps back.
struct Gaussian {
  Vec3 center = Vec3::Zero();
  Quat rotation = identity_quat();
  Vec3 scale = Vec3::Ones();  // per-axis standard deviation, > 0
  double opacity = 0.5;       // [0, 1]
  Vec3 color = Vec3::Constant(0.5);

  bool operator==(const Gaussian&) const = default;
};

struct GaussianCloud {
  std::vector<Gaussian> gaussians;
  std::vector<int> anchors;  // indices of keypoint-bearing Gaussians

  std::size_t size() const { return gaussians.size(); }

  /// Throws DataError when any Gaussian or anchor invariant is violated.
  void validate() const;

  bool operator==(const GaussianCloud&) const = default;
};

/// Pinhole camera with a look-at pose. Camera space follows the usual vision
/// convention: +x right, +y down, +z forward.
struct Camera {
  Vec3 position{0.0, 0.0, 2.0};
  Vec3 target = Vec3::Zero();
  Vec3 up{0.0, 1.0, 0.0};
  double vertical_fov = 0.8569;  // radians (~49.1 degrees)
  int image_width = 256;
  int image_height = 256;
  double near = 0.01;
  double far = 100.0;

  void validate() const;

  /// Rows are the camera axes in world coordinates.
  Mat3 world_to_camera() const;
  Vec3 to_camera(const Vec3& world) const { return world_to_camera() * (world - position); }

  double focal_y() const;
  double focal_x() const { return focal_y(); }
  double cx() const { return 0.5 * image_width; }
  double cy() const { return 0.5 * image_height; }

  bool operator==(const Camera&) const = default;
};

/// H x W x 3 image, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
  bool operator==(const Image&) const = default;
};

struct FrameSequence {
  std::vector<Image> frames;
  std::vector<double> timesteps;  // normalized, strictly increasing

  std::size_t size() const { return frames.size(); }
  void validate() const;
};

/// Evenly spaced timesteps over [0, 1]; a single frame sits at 0.
std::vector<double> linspace_timesteps(int count);

/// N keypoints tracked over T frames in pixel coordinates.
struct KeypointTrack {
  int n = 0;
  int t = 0;
  int image_width = 0;
  int image_height = 0;
  std::vector<Vec2> points;            // t * n, frame-major
  std::vector<std::uint8_t> visible;   // t * n
  std::vector<Vec2> support;           // n, keypoints of the support image

  KeypointTrack() = default;
  KeypointTrack(int n_points, int n_frames, int width, int height);

  Vec2& point(int frame, int i) { return points[static_cast<std::size_t>(frame) * n + i]; }
  const Vec2& point(int frame, int i) const { return points[static_cast<std::size_t>(frame) * n + i]; }
  bool is_visible(int frame, int i) const { return visible[static_cast<std::size_t>(frame) * n + i] != 0; }
  void set_visible(int frame, int i, bool v) { visible[static_cast<std::size_t>(frame) * n + i] = v ? 1 : 0; }

  /// Shape consistency, finite coordinates, and in-bounds visible points.
  void validate() const;

  bool operator==(const KeypointTrack&) const = default;
};

/// Camera on a sphere of `radius` around the origin looking at it. Elevation of
/// exactly +-90 degrees needs `fallback_up`, since +y is then parallel to the view.
Camera make_orbit_camera(double azimuth_deg, double elevation_deg, double radius, int image_size,
                         std::optional<Vec3> fallback_up = std::nullopt);

/// M Gaussians uniform in the ball of `radius`, identity rotation, isotropic
/// scale radius * M^(-1/3), opacity 0.5 and mid-gray color.
GaussianCloud init_sphere_cloud(int count, double radius, std::uint64_t seed);

/// Farthest-point sampling over centers, starting from the Gaussian farthest
/// from the centroid. Ties resolve to the lower index.
std::vector<int> farthest_point_anchors(const GaussianCloud& cloud, int count);

/// R diag(s^2) R^T.
Mat3 covariance_of(const Gaussian& g);

double sigmoid(double x);
double logit(double p);

}  // namespace splat4d
