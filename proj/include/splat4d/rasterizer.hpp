// rasterizer.hpp
//
// Differentiable CPU splatting: perspective/EWA projection of a GaussianCloud to
// screen-space splats, tile-binned front-to-back alpha compositing, and the
// matching analytic backward pass.

#pragma once

#include "splat4d/types.hpp"

#include <span>
#include <vector>

namespace splat4d {

inline constexpr double kCovarianceDilation = 0.3;  // px^2 added to each 2D covariance
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr double kCutoffSigma = 3.0;
inline constexpr int kTileSize = 16;

struct Splat2D {
  int index = 0;  // Gaussian index in the source cloud
  Vec2 mean = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

struct RenderSettings {
  Vec3 background = Vec3::Ones();
};

struct Contribution {
  int splat;            // position in the depth-sorted order
  double transmittance;  // T before this splat was composited
};

struct RenderOutput {
  Image image;
  std::vector<double> alpha;  // H * W, in [0, 1)
  Vec3 background = Vec3::Ones();

  // Saved for the backward pass.
  std::vector<int> order;                    // splat list indices sorted by (depth, index)
  std::vector<std::size_t> pixel_begin;      // H * W offsets into contributions
  std::vector<std::uint32_t> pixel_count;    // H * W
  std::vector<Contribution> contributions;
  std::vector<double> final_transmittance;   // H * W
};

/// Footprint of a splat at squared Mahalanobis distance `m`, normalized to 1 at
/// the center: exp(-m/2) minus its second-order Taylor polynomial at the 3-sigma
/// cutoff. Value, slope and curvature vanish there, so images stay C2 in every
/// splat parameter and finite differences stay accurate across the cutoff.
double splat_falloff(double m);
double splat_falloff_derivative(double m);

/// Camera-space point to pixel coordinates, with d(pixel)/d(camera point).
Vec2 project_point(const Camera& cam, const Vec3& cam_point, Eigen::Matrix<double, 2, 3>* jacobian = nullptr);

/// One splat per Gaussian whose center lies between the near and far planes and
/// whose 3-sigma footprint touches the image.
std::vector<Splat2D> project(const GaussianCloud& cloud, const Camera& cam);

RenderOutput rasterize(std::span<const Splat2D> splats, int width, int height, const RenderSettings& settings = {});

struct SplatGradients {
  std::vector<Vec2> mean;
  std::vector<Mat2> cov2d;  // symmetric
  std::vector<double> opacity;
  std::vector<Vec3> color;
};

/// Gradients with respect to each splat (indexed like the input span) given
/// dL/d(image).
SplatGradients rasterize_backward(const Image& image_grad, const RenderOutput& saved, std::span<const Splat2D> splats);

struct CloudGradients {
  std::vector<Vec3> center;
  std::vector<Quat> rotation;  // w.r.t. the raw quaternion, normalization included
  std::vector<Vec3> scale;
  std::vector<double> opacity;
  std::vector<Vec3> color;

  explicit CloudGradients(std::size_t m = 0)
      : center(m, Vec3::Zero()), rotation(m, Quat::Zero()), scale(m, Vec3::Zero()), opacity(m, 0.0),
        color(m, Vec3::Zero()) {}

  std::size_t size() const { return center.size(); }
  CloudGradients& operator+=(const CloudGradients& o);
};

/// Chains splat gradients back through the projection to Gaussian parameters.
/// Culled Gaussians receive zero gradient.
CloudGradients project_backward(const GaussianCloud& cloud, const Camera& cam, std::span<const Splat2D> splats,
                                const SplatGradients& splat_grads);

struct RenderResult {
  std::vector<Splat2D> splats;
  RenderOutput output;
};

RenderResult render(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings = {});

CloudGradients render_backward(const Image& image_grad, const RenderResult& result, const GaussianCloud& cloud,
                               const Camera& cam);

/// d(R(q/|q|))/dq contracted with dL/dR.
Quat quat_matrix_backward(const Quat& q, const Mat3& grad_r);

}  // namespace splat4d
