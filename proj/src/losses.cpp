// losses.cpp

#include "splat4d/losses.hpp"

#include "splat4d/error.hpp"
#include "splat4d/rasterizer.hpp"

#include <cmath>
#include <string>

namespace splat4d {

void LossWeights::validate() const {
  for (double w : {ref, kml, scl})
    if (!std::isfinite(w) || w < 0.0) throw UsageError("loss weights must be finite and non-negative");
}

RefLoss loss_ref(std::span<const Image> rendered, std::span<const Image> reference) {
  if (rendered.size() != reference.size()) throw DataError("rendered and reference frame counts differ");
  if (rendered.empty()) throw DataError("reference loss needs at least one frame");
  RefLoss out;
  const double frames = static_cast<double>(rendered.size());
  for (std::size_t f = 0; f < rendered.size(); ++f) {
    const Image& a = rendered[f];
    const Image& b = reference[f];
    if (!a.same_shape(b) || a.data.size() != b.data.size())
      throw DataError("frame " + std::to_string(f) + ": rendered " + std::to_string(a.width) + "x" +
                      std::to_string(a.height) + " vs reference " + std::to_string(b.width) + "x" +
                      std::to_string(b.height));
    const double count = static_cast<double>(a.data.size());
    Image g(a.width, a.height);
    double sum = 0.0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
      const double d = a.data[k] - b.data[k];
      sum += d * d;
      g.data[k] = 2.0 * d / (frames * count);
    }
    out.per_frame.push_back(sum / count);
    out.value += sum / count;
    out.grad.push_back(std::move(g));
  }
  out.value /= frames;
  return out;
}

RefLoss loss_ref(const FrameSequence& rendered, const FrameSequence& reference) {
  return loss_ref(std::span<const Image>(rendered.frames), std::span<const Image>(reference.frames));
}

KeypointProjection predict_keypoints(std::span<const Vec3> centers, std::span<const int> anchors, const Camera& cam) {
  const Mat3 w = cam.world_to_camera();
  KeypointProjection out;
  out.points.reserve(anchors.size());
  for (int a : anchors) {
    if (a < 0 || static_cast<std::size_t>(a) >= centers.size())
      throw DataError("anchor index " + std::to_string(a) + " out of range");
    const Vec3 t = w * (centers[a] - cam.position);
    Eigen::Matrix<double, 2, 3> j = Eigen::Matrix<double, 2, 3>::Zero();
    if (t.z() > cam.near) {
      out.points.push_back(project_point(cam, t, &j));
      out.visible.push_back(1);
      j = j * w;
    } else {
      out.points.push_back(Vec2::Zero());
      out.visible.push_back(0);
    }
    out.jacobian.push_back(j);
  }
  return out;
}

KeypointProjection predict_keypoints(const DeformedCloud& deformed, const Camera& cam) {
  if (!deformed.base) throw UsageError("deformed cloud has no base cloud");
  return predict_keypoints(deformed.centers, deformed.base->anchors, cam);
}

KeypointTrack assemble_track(std::span<const KeypointProjection> frames, const Camera& cam, bool clip_to_image) {
  const int n = frames.empty() ? 0 : static_cast<int>(frames.front().size());
  KeypointTrack track(n, static_cast<int>(frames.size()), cam.image_width, cam.image_height);
  for (int f = 0; f < track.t; ++f) {
    if (static_cast<int>(frames[f].size()) != n) throw UsageError("keypoint count changes between frames");
    for (int i = 0; i < n; ++i) {
      const Vec2& p = frames[f].points[i];
      bool vis = frames[f].visible[i] != 0;
      if (clip_to_image && vis)
        vis = p.x() >= 0.0 && p.x() <= cam.image_width && p.y() >= 0.0 && p.y() <= cam.image_height;
      track.point(f, i) = vis ? p : Vec2::Zero();
      track.set_visible(f, i, vis);
    }
  }
  if (track.t > 0) track.support.assign(track.points.begin(), track.points.begin() + n);
  return track;
}

std::vector<Vec3> keypoint_backward(const KeypointProjection& projection, std::span<const Vec2> point_grads) {
  if (point_grads.size() != projection.size()) throw UsageError("keypoint gradient count mismatch");
  std::vector<Vec3> out(projection.size());
  for (std::size_t i = 0; i < projection.size(); ++i) out[i] = projection.jacobian[i].transpose() * point_grads[i];
  return out;
}

KmlLoss loss_kml(const KeypointTrack& predicted, const KeypointTrack& reference) {
  if (predicted.n != reference.n)
    throw DataError("keypoint count mismatch: " + std::to_string(predicted.n) + " vs " + std::to_string(reference.n));
  if (predicted.t != reference.t)
    throw DataError("track length mismatch: " + std::to_string(predicted.t) + " vs " + std::to_string(reference.t));
  if (predicted.image_width != reference.image_width || reference.image_width <= 0)
    throw DataError("keypoint tracks use different image widths");
  const std::size_t total = static_cast<std::size_t>(reference.n) * reference.t;
  if (predicted.points.size() != total || reference.points.size() != total || predicted.visible.size() != total ||
      reference.visible.size() != total)
    throw DataError("keypoint track storage does not match its n x t shape");

  KmlLoss out;
  out.per_timestep.assign(reference.t, 0.0);
  out.grad.assign(total, Vec2::Zero());
  if (reference.n == 0) return out;
  const double inv_w = 1.0 / reference.image_width;
  const double inv_n = 1.0 / reference.n;
  for (int f = 0; f + 1 < reference.t; ++f) {
    for (int i = 0; i < reference.n; ++i) {
      if (!predicted.is_visible(f, i) || !reference.is_visible(f, i)) continue;
      const Vec2 d = (predicted.point(f, i) - reference.point(f, i)) * inv_w;
      out.per_timestep[f] += d.squaredNorm() * inv_n;
      out.grad[static_cast<std::size_t>(f) * reference.n + i] = 2.0 * inv_n * inv_w * d;
    }
    out.value += out.per_timestep[f];
  }
  return out;
}

SclLoss loss_scl(std::span<const std::vector<Vec3>> trajectory) {
  if (trajectory.size() < 2) throw DataError("consistency loss needs at least two timesteps");
  const std::size_t m = trajectory.front().size();
  for (std::size_t f = 0; f < trajectory.size(); ++f)
    if (trajectory[f].size() != m)
      throw DataError("timestep " + std::to_string(f) + " has " + std::to_string(trajectory[f].size()) +
                      " centers, expected " + std::to_string(m));
  SclLoss out;
  out.grad.assign(trajectory.size(), std::vector<Vec3>(m, Vec3::Zero()));
  out.per_timestep.assign(trajectory.size() - 1, 0.0);
  if (m == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t f = 0; f + 1 < trajectory.size(); ++f) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const Vec3 d = trajectory[f + 1][i] - trajectory[f][i];
      sum += d.squaredNorm();
      out.grad[f + 1][i] += 2.0 * inv_m * d;
      out.grad[f][i] -= 2.0 * inv_m * d;
    }
    out.per_timestep[f] = sum * inv_m;
    out.value += out.per_timestep[f];
  }
  return out;
}

LossReport loss_pal(const RefLoss& ref, const KmlLoss& kml, const SclLoss& scl, const LossWeights& weights) {
  weights.validate();
  LossReport r;
  r.ref = ref.value;
  r.kml = kml.value;
  r.scl = scl.value;
  r.total = weights.ref * r.ref + weights.kml * r.kml + weights.scl * r.scl;
  r.ref_per_frame = ref.per_frame;
  r.kml_per_timestep = kml.per_timestep;
  r.scl_per_timestep = scl.per_timestep;
  return r;
}

}  // namespace splat4d
