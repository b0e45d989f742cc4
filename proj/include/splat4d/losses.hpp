// losses.hpp
//
// Training objective: reference-frame MSE, keypoint match over anchor
// projections, spatio-temporal consistency of centers, and their weighted sum.

#pragma once

#include "splat4d/deformation.hpp"
#include "splat4d/types.hpp"

#include <span>
#include <vector>

namespace splat4d {

struct LossWeights {
  double ref = 1.0;
  double kml = 0.1;
  double scl = 0.001;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct RefLoss {
  double value = 0.0;
  std::vector<double> per_frame;
  std::vector<Image> grad;  // dL/d(rendered)
};

/// Mean over frames of the per-pixel, per-channel mean squared error.
RefLoss loss_ref(std::span<const Image> rendered, std::span<const Image> reference);
RefLoss loss_ref(const FrameSequence& rendered, const FrameSequence& reference);

/// Anchor centers projected at one timestep.
struct KeypointProjection {
  std::vector<Vec2> points;
  std::vector<std::uint8_t> visible;                  // in front of the near plane
  std::vector<Eigen::Matrix<double, 2, 3>> jacobian;  // d(pixel)/d(world center)

  std::size_t size() const { return points.size(); }
};

KeypointProjection predict_keypoints(std::span<const Vec3> centers, std::span<const int> anchors, const Camera& cam);
KeypointProjection predict_keypoints(const DeformedCloud& deformed, const Camera& cam);

/// Stacks per-frame projections into a track. With `clip_to_image`, points
/// outside [0, W] x [0, H] are marked invisible as well.
KeypointTrack assemble_track(std::span<const KeypointProjection> frames, const Camera& cam, bool clip_to_image);

/// Chains point gradients (pixels) to the anchored centers; one Vec3 per anchor.
std::vector<Vec3> keypoint_backward(const KeypointProjection& projection, std::span<const Vec2> point_grads);

struct KmlLoss {
  double value = 0.0;
  std::vector<double> per_timestep;  // t entries; the last frame is always 0
  std::vector<Vec2> grad;            // dL/d(predicted point) in pixels, frame-major
};

/// (1/N) sum over frames 0..T-2 and keypoints of |p - p_hat|^2, with pixel
/// coordinates divided by the image width. Points invisible in either track
/// are skipped.
KmlLoss loss_kml(const KeypointTrack& predicted, const KeypointTrack& reference);

struct SclLoss {
  double value = 0.0;
  std::vector<double> per_timestep;      // T - 1 transitions
  std::vector<std::vector<Vec3>> grad;  // same shape as the trajectory
};

/// (1/M) sum over consecutive frames and Gaussians of |P_{t+1} - P_t|^2.
SclLoss loss_scl(std::span<const std::vector<Vec3>> trajectory);

struct LossReport {
  double ref = 0.0;
  double kml = 0.0;
  double scl = 0.0;
  double total = 0.0;
  std::vector<double> ref_per_frame;
  std::vector<double> kml_per_timestep;
  std::vector<double> scl_per_timestep;
};

LossReport loss_pal(const RefLoss& ref, const KmlLoss& kml, const SclLoss& scl, const LossWeights& weights);

}  // namespace splat4d
