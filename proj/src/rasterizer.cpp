// rasterizer.cpp

#include "splat4d/rasterizer.hpp"

#include "splat4d/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace splat4d {

namespace {

const double kCutoffMahalanobis = kCutoffSigma * kCutoffSigma;
const double kCutoffFalloff = std::exp(-0.5 * kCutoffSigma * kCutoffSigma);
// Value at the center after subtracting the quadratic Taylor polynomial at the cutoff.
const double kFalloffNorm =
    1.0 - kCutoffFalloff * (1.0 + 0.5 * kCutoffMahalanobis + 0.125 * kCutoffMahalanobis * kCutoffMahalanobis);

double max_eigenvalue(const Mat2& c) {
  const double mid = 0.5 * (c(0, 0) + c(1, 1));
  const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
  return mid + std::sqrt(std::max(0.0, mid * mid - det));
}

// Screen-space data for one splat in sorted order; laid out for the inner loop.
struct Prepared {
  double mx, my;
  double a, b, c;  // inverse covariance (conic)
  double opacity;
  Vec3 color;
  int x0, x1, y0, y1;  // inclusive pixel range that can receive contributions
};

}  // namespace

double splat_falloff(double m) {
  if (m >= kCutoffMahalanobis) return 0.0;
  const double u = m - kCutoffMahalanobis;
  return (std::exp(-0.5 * m) - kCutoffFalloff * (1.0 - 0.5 * u + 0.125 * u * u)) / kFalloffNorm;
}

double splat_falloff_derivative(double m) {
  if (m >= kCutoffMahalanobis) return 0.0;
  const double u = m - kCutoffMahalanobis;
  return (-0.5 * std::exp(-0.5 * m) - kCutoffFalloff * (-0.5 + 0.25 * u)) / kFalloffNorm;
}

Vec2 project_point(const Camera& cam, const Vec3& t, Eigen::Matrix<double, 2, 3>* jacobian) {
  const double fx = cam.focal_x(), fy = cam.focal_y();
  const double inv_z = 1.0 / t.z();
  if (jacobian) {
    *jacobian << fx * inv_z, 0.0, -fx * t.x() * inv_z * inv_z, 0.0, fy * inv_z, -fy * t.y() * inv_z * inv_z;
  }
  return Vec2(fx * t.x() * inv_z + cam.cx(), fy * t.y() * inv_z + cam.cy());
}

std::vector<Splat2D> project(const GaussianCloud& cloud, const Camera& cam) {
  const Mat3 w = cam.world_to_camera();
  std::vector<Splat2D> out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    const Vec3 t = w * (g.center - cam.position);
    if (!(t.z() > cam.near) || !(t.z() < cam.far)) continue;

    Eigen::Matrix<double, 2, 3> j;
    const Vec2 mean = project_point(cam, t, &j);
    const Mat3 v = w * covariance_of(g) * w.transpose();
    const Mat2 cov = j * v * j.transpose() + kCovarianceDilation * Mat2::Identity();

    const double r = kCutoffSigma * std::sqrt(max_eigenvalue(cov));
    if (mean.x() + r < 0.0 || mean.x() - r > cam.image_width || mean.y() + r < 0.0 ||
        mean.y() - r > cam.image_height)
      continue;

    Splat2D s;
    s.index = static_cast<int>(i);
    s.mean = mean;
    s.cov2d = cov;
    s.depth = t.z();
    s.opacity = g.opacity;
    s.color = g.color;
    out.push_back(s);
  }
  return out;
}

RenderOutput rasterize(std::span<const Splat2D> splats, int width, int height, const RenderSettings& settings) {
  if (width <= 0 || height <= 0) throw UsageError("render target must have positive size");
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const Splat2D& s = splats[k];
    const bool finite = s.mean.allFinite() && s.cov2d.allFinite() && std::isfinite(s.depth) &&
                        std::isfinite(s.opacity) && s.color.allFinite();
    if (!finite) throw NumericalError("splat " + std::to_string(k) + " has non-finite parameters");
    if (!(s.cov2d.determinant() > 0.0) || !(s.cov2d(0, 0) > 0.0))
      throw NumericalError("splat " + std::to_string(k) + " has a non positive-definite covariance");
  }

  const std::size_t n_pixels = static_cast<std::size_t>(width) * height;
  RenderOutput out;
  out.image = Image(width, height);
  out.alpha.assign(n_pixels, 0.0);
  out.background = settings.background;
  out.pixel_begin.assign(n_pixels, 0);
  out.pixel_count.assign(n_pixels, 0);
  out.final_transmittance.assign(n_pixels, 1.0);

  out.order.resize(splats.size());
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(), [&](int l, int r) {
    if (splats[l].depth != splats[r].depth) return splats[l].depth < splats[r].depth;
    if (splats[l].index != splats[r].index) return splats[l].index < splats[r].index;
    return l < r;
  });

  const int tiles_x = (width + kTileSize - 1) / kTileSize;
  const int tiles_y = (height + kTileSize - 1) / kTileSize;
  std::vector<Prepared> prepared(splats.size());
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);

  for (std::size_t k = 0; k < out.order.size(); ++k) {
    const Splat2D& s = splats[out.order[k]];
    const Mat2 conic = s.cov2d.inverse();
    const double r = kCutoffSigma * std::sqrt(max_eigenvalue(s.cov2d));
    Prepared& p = prepared[k];
    p.mx = s.mean.x();
    p.my = s.mean.y();
    p.a = conic(0, 0);
    p.b = conic(0, 1);
    p.c = conic(1, 1);
    p.opacity = s.opacity;
    p.color = s.color;
    // Pixel centers sit at integer + 0.5.
    p.x0 = std::max(0, static_cast<int>(std::floor(p.mx - r - 0.5)));
    p.x1 = std::min(width - 1, static_cast<int>(std::ceil(p.mx + r - 0.5)));
    p.y0 = std::max(0, static_cast<int>(std::floor(p.my - r - 0.5)));
    p.y1 = std::min(height - 1, static_cast<int>(std::ceil(p.my + r - 0.5)));
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;
    for (int ty = p.y0 / kTileSize; ty <= p.y1 / kTileSize; ++ty)
      for (int tx = p.x0 / kTileSize; tx <= p.x1 / kTileSize; ++tx)
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(k));
  }

  const Vec3 bg = settings.background;
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const std::vector<int>& bin = bins[static_cast<std::size_t>(ty) * tiles_x + tx];
      const int y_end = std::min(height, (ty + 1) * kTileSize);
      const int x_end = std::min(width, (tx + 1) * kTileSize);
      for (int y = ty * kTileSize; y < y_end; ++y) {
        for (int x = tx * kTileSize; x < x_end; ++x) {
          const std::size_t pix = static_cast<std::size_t>(y) * width + x;
          const double px = x + 0.5, py = y + 0.5;
          double transmittance = 1.0;
          Vec3 accum = Vec3::Zero();
          out.pixel_begin[pix] = out.contributions.size();
          for (int k : bin) {
            const Prepared& p = prepared[k];
            if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
            const double dx = px - p.mx, dy = py - p.my;
            const double m = p.a * dx * dx + 2.0 * p.b * dx * dy + p.c * dy * dy;
            if (m >= kCutoffMahalanobis) continue;
            const double alpha = std::min(kMaxAlpha, p.opacity * splat_falloff(m));
            out.contributions.push_back({k, transmittance});
            accum += (alpha * transmittance) * p.color;
            transmittance *= 1.0 - alpha;
            if (transmittance < kMinTransmittance) break;
          }
          out.pixel_count[pix] = static_cast<std::uint32_t>(out.contributions.size() - out.pixel_begin[pix]);
          accum += transmittance * bg;
          for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = accum[c];
          out.alpha[pix] = 1.0 - transmittance;
          out.final_transmittance[pix] = transmittance;
        }
      }
    }
  }
  return out;
}

SplatGradients rasterize_backward(const Image& image_grad, const RenderOutput& saved,
                                  std::span<const Splat2D> splats) {
  const int width = saved.image.width, height = saved.image.height;
  if (!image_grad.same_shape(saved.image) || image_grad.data.size() != saved.image.data.size())
    throw UsageError("image gradient does not match the rendered image dimensions");
  if (saved.order.size() != splats.size())
    throw UsageError("saved render state was produced from a different splat list");

  const std::size_t n = splats.size();
  SplatGradients grads;
  grads.mean.assign(n, Vec2::Zero());
  grads.cov2d.assign(n, Mat2::Zero());
  grads.opacity.assign(n, 0.0);
  grads.color.assign(n, Vec3::Zero());

  // Gradients w.r.t. the conic, accumulated in sorted order.
  std::vector<Mat2> conic_grad(n, Mat2::Zero());
  std::vector<Vec2> mean_grad(n, Vec2::Zero());
  std::vector<Mat2> conics(n);
  for (std::size_t k = 0; k < n; ++k) conics[k] = splats[saved.order[k]].cov2d.inverse();

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * width + x;
      const Vec3 g(image_grad.at(x, y, 0), image_grad.at(x, y, 1), image_grad.at(x, y, 2));
      if (g.isZero(0.0)) continue;
      const double px = x + 0.5, py = y + 0.5;
      Vec3 suffix = saved.final_transmittance[pix] * saved.background;
      const std::size_t begin = saved.pixel_begin[pix];
      for (std::size_t c = begin + saved.pixel_count[pix]; c-- > begin;) {
        const Contribution& contrib = saved.contributions[c];
        const int k = contrib.splat;
        const Splat2D& s = splats[saved.order[k]];
        const Mat2& conic = conics[k];
        const Vec2 d(px - s.mean.x(), py - s.mean.y());
        const double m = d.dot(conic * d);
        const double falloff = splat_falloff(m);
        const double raw_alpha = s.opacity * falloff;
        const bool clamped = raw_alpha > kMaxAlpha;
        const double alpha = clamped ? kMaxAlpha : raw_alpha;
        const double t = contrib.transmittance;

        grads.color[saved.order[k]] += (alpha * t) * g;
        const double d_alpha = t * g.dot(s.color) - g.dot(suffix) / (1.0 - alpha);
        suffix += (alpha * t) * s.color;
        if (clamped) continue;

        grads.opacity[saved.order[k]] += d_alpha * falloff;
        const double d_m = d_alpha * s.opacity * splat_falloff_derivative(m);
        mean_grad[k] += -2.0 * d_m * (conic * d);
        conic_grad[k] += d_m * (d * d.transpose());
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    const int i = saved.order[k];
    grads.mean[i] = mean_grad[k];
    grads.cov2d[i] = -conics[k] * conic_grad[k] * conics[k];
  }
  return grads;
}

Quat quat_matrix_backward(const Quat& q_raw, const Mat3& gr) {
  const double norm = q_raw.norm();
  const Quat q = q_raw / norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Quat dq;
  dq[0] = 2.0 * (-z * gr(0, 1) + y * gr(0, 2) + z * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1));
  dq[1] = 2.0 * (y * gr(0, 1) + z * gr(0, 2) + y * gr(1, 0) - 2.0 * x * gr(1, 1) - w * gr(1, 2) + z * gr(2, 0) +
                 w * gr(2, 1) - 2.0 * x * gr(2, 2));
  dq[2] = 2.0 * (-2.0 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + z * gr(1, 2) - w * gr(2, 0) +
                 z * gr(2, 1) - 2.0 * y * gr(2, 2));
  dq[3] = 2.0 * (-2.0 * z * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2.0 * z * gr(1, 1) +
                 y * gr(1, 2) + x * gr(2, 0) + y * gr(2, 1));
  return (dq - q * q.dot(dq)) / norm;
}

CloudGradients project_backward(const GaussianCloud& cloud, const Camera& cam, std::span<const Splat2D> splats,
                                const SplatGradients& sg) {
  if (sg.mean.size() != splats.size()) throw UsageError("splat gradient count does not match splat list");
  CloudGradients out(cloud.size());
  const Mat3 w = cam.world_to_camera();
  const double fx = cam.focal_x(), fy = cam.focal_y();

  for (std::size_t k = 0; k < splats.size(); ++k) {
    const int i = splats[k].index;
    if (i < 0 || static_cast<std::size_t>(i) >= cloud.size())
      throw UsageError("splat refers to a Gaussian outside the cloud");
    const Gaussian& g = cloud.gaussians[i];
    const Vec3 t = w * (g.center - cam.position);
    Eigen::Matrix<double, 2, 3> j;
    project_point(cam, t, &j);
    const Mat3 rot = quat_to_matrix(g.rotation);
    const Mat3 ms = rot * g.scale.asDiagonal();
    const Mat3 v = w * (ms * ms.transpose()) * w.transpose();

    const Mat2& g2 = sg.cov2d[k];
    const Vec2& gm = sg.mean[k];

    // Through the mean.
    Vec3 dt = j.transpose() * gm;
    // Through the Jacobian of the EWA projection.
    const Eigen::Matrix<double, 2, 3> gj = 2.0 * g2 * j * v;
    const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    dt.x() += gj(0, 2) * (-fx * iz2);
    dt.y() += gj(1, 2) * (-fy * iz2);
    dt.z() += gj(0, 0) * (-fx * iz2) + gj(0, 2) * (2.0 * fx * t.x() * iz3) + gj(1, 1) * (-fy * iz2) +
              gj(1, 2) * (2.0 * fy * t.y() * iz3);
    out.center[i] += w.transpose() * dt;

    // Through the 3D covariance.
    const Mat3 g_sigma = w.transpose() * (j.transpose() * g2 * j) * w;
    const Mat3 g_ms = 2.0 * g_sigma * ms;
    Vec3 ds;
    for (int c = 0; c < 3; ++c) ds[c] = g_ms.col(c).dot(rot.col(c));
    out.scale[i] += ds;
    out.rotation[i] += quat_matrix_backward(g.rotation, g_ms * g.scale.asDiagonal());

    out.opacity[i] += sg.opacity[k];
    out.color[i] += sg.color[k];
  }
  return out;
}

CloudGradients& CloudGradients::operator+=(const CloudGradients& o) {
  if (o.size() != size()) throw UsageError("cannot add gradients of clouds with different sizes");
  for (std::size_t i = 0; i < size(); ++i) {
    center[i] += o.center[i];
    rotation[i] += o.rotation[i];
    scale[i] += o.scale[i];
    opacity[i] += o.opacity[i];
    color[i] += o.color[i];
  }
  return *this;
}

RenderResult render(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings) {
  RenderResult r;
  r.splats = project(cloud, cam);
  r.output = rasterize(r.splats, cam.image_width, cam.image_height, settings);
  return r;
}

CloudGradients render_backward(const Image& image_grad, const RenderResult& result, const GaussianCloud& cloud,
                               const Camera& cam) {
  const SplatGradients sg = rasterize_backward(image_grad, result.output, result.splats);
  return project_backward(cloud, cam, result.splats, sg);
}

}  // namespace splat4d
