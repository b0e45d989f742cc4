#include "fd_oracle.hpp"
#include "splat4d/error.hpp"
#include "splat4d/rasterizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace splat4d;
using namespace splat4d::testing;

namespace {

Splat2D centered_splat(int px, int py, double opacity, const Vec3& color, double depth, int index) {
  Splat2D s;
  s.index = index;
  s.mean = Vec2(px + 0.5, py + 0.5);
  s.cov2d = Mat2::Identity() * 4.0;
  s.depth = depth;
  s.opacity = opacity;
  s.color = color;
  return s;
}

Vec3 pixel(const Image& img, int x, int y) { return {img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)}; }

}  // namespace

TEST(Project, OnAxisGaussianLandsAtImageCenter) {
  GaussianCloud cloud;
  cloud.gaussians.push_back(Gaussian{});
  cloud.gaussians[0].scale = Vec3::Constant(0.1);
  const Camera cam = make_orbit_camera(0.0, 0.0, 2.0, 256);
  const auto splats = project(cloud, cam);
  ASSERT_EQ(splats.size(), 1u);
  EXPECT_NEAR(splats[0].mean.x(), 128.0, 0.5);
  EXPECT_NEAR(splats[0].mean.y(), 128.0, 0.5);
  EXPECT_NEAR(splats[0].depth, 2.0, 1e-12);
}

TEST(Project, GaussianBehindCameraIsDropped) {
  GaussianCloud cloud;
  Gaussian g;
  g.center = Vec3(0.0, 0.0, 3.0);
  cloud.gaussians.push_back(g);
  g.center = Vec3(0.0, 0.0, 0.0);
  cloud.gaussians.push_back(g);
  const auto splats = project(cloud, make_orbit_camera(0.0, 0.0, 2.0, 64));
  ASSERT_EQ(splats.size(), 1u);
  EXPECT_EQ(splats[0].index, 1);
}

TEST(Project, IsotropicCovarianceMatchesPinholeOracle) {
  const double s = 0.1, d = 2.0;
  GaussianCloud cloud;
  Gaussian g;
  g.scale = Vec3::Constant(s);
  cloud.gaussians.push_back(g);
  const Camera cam = make_orbit_camera(0.0, 0.0, d, 256);
  const auto splats = project(cloud, cam);
  ASSERT_EQ(splats.size(), 1u);
  const double f = 128.0 / std::tan(0.5 * cam.vertical_fov);
  const double expected = (f * s / d) * (f * s / d);
  const Mat2 projected = splats[0].cov2d - kCovarianceDilation * Mat2::Identity();
  EXPECT_NEAR(projected(0, 0), expected, 1e-9 * expected);
  EXPECT_NEAR(projected(1, 1), expected, 1e-9 * expected);
  EXPECT_NEAR(projected(0, 1), 0.0, 1e-9);
}

TEST(Project, DilationFloorsEigenvalues) {
  const RandomScene scene = random_scene(3, 32, 32);
  for (const Splat2D& s : project(scene.cloud, scene.camera)) {
    Eigen::SelfAdjointEigenSolver<Mat2> eig(s.cov2d);
    EXPECT_GE(eig.eigenvalues().minCoeff(), kCovarianceDilation - 1e-12);
    EXPECT_GT(s.depth, scene.camera.near);
  }
}

TEST(Rasterize, EmptySceneIsBackground) {
  const RenderOutput out = rasterize({}, 20, 12, RenderSettings{Vec3(0.2, 0.3, 0.4)});
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 20; ++x) {
      EXPECT_EQ(pixel(out.image, x, y), Vec3(0.2, 0.3, 0.4));
      EXPECT_EQ(out.alpha[y * 20 + x], 0.0);
    }
}

TEST(Rasterize, SingleSplatClosedForm) {
  const Vec3 color(0.2, 0.4, 0.9);
  std::vector<Splat2D> splats{centered_splat(16, 16, 0.7, color, 1.0, 0)};
  RenderOutput out = rasterize(splats, 32, 32);
  Vec3 expected = 0.7 * color + 0.3 * Vec3::Ones();
  EXPECT_TRUE(pixel(out.image, 16, 16).isApprox(expected, 1e-12));
  EXPECT_NEAR(out.alpha[16 * 32 + 16], 0.7, 1e-12);

  splats[0].opacity = 1.0;  // clamped to 0.99
  out = rasterize(splats, 32, 32);
  expected = 0.99 * color + 0.01 * Vec3::Ones();
  EXPECT_TRUE(pixel(out.image, 16, 16).isApprox(expected, 1e-12));
}

TEST(Rasterize, TwoSplatCompositingHandCalculation) {
  const Vec3 red(1, 0, 0), green(0, 1, 0);
  std::vector<Splat2D> splats{centered_splat(5, 5, 0.8, red, 3.0, 0), centered_splat(5, 5, 0.5, green, 1.0, 1)};
  const RenderOutput out = rasterize(splats, 16, 16);
  // 0.5 * green + 0.5 * (0.8 * red + 0.2 * white)
  EXPECT_TRUE(pixel(out.image, 5, 5).isApprox(Vec3(0.5, 0.6, 0.1), 1e-12));
}

TEST(Rasterize, RejectsNonFiniteSplat) {
  std::vector<Splat2D> splats{centered_splat(1, 1, 0.5, Vec3::Ones(), 1.0, 0),
                              centered_splat(2, 2, 0.5, Vec3::Ones(), 1.0, 1)};
  splats[1].mean.x() = std::nan("");
  try {
    rasterize(splats, 8, 8);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("splat 1"), std::string::npos);
  }
}

TEST(Rasterize, PermutationInvariantAndDeterministic) {
  const RandomScene scene = random_scene(17, 24, 48);
  std::vector<Splat2D> splats = project(scene.cloud, scene.camera);
  const RenderOutput ref = rasterize(splats, 48, 48);
  std::mt19937 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(splats.begin(), splats.end(), rng);
    const RenderOutput out = rasterize(splats, 48, 48);
    EXPECT_EQ(out.image.data, ref.image.data);
    EXPECT_EQ(out.alpha, ref.alpha);
  }
}

TEST(Rasterize, EqualDepthTiesResolveByIndex) {
  std::vector<Splat2D> splats{centered_splat(4, 4, 0.6, Vec3(1, 0, 0), 2.0, 7),
                              centered_splat(4, 4, 0.6, Vec3(0, 0, 1), 2.0, 3)};
  const RenderOutput a = rasterize(splats, 8, 8);
  std::swap(splats[0], splats[1]);
  const RenderOutput b = rasterize(splats, 8, 8);
  EXPECT_EQ(a.image.data, b.image.data);
  // Index 3 (blue) is composited first.
  EXPECT_GT(a.image.at(4, 4, 2), a.image.at(4, 4, 0));
}

TEST(Rasterize, AlphaRangeAndMonotoneInOpacity) {
  RandomScene scene = random_scene(23, 16, 32);
  std::vector<Splat2D> splats = project(scene.cloud, scene.camera);
  ASSERT_FALSE(splats.empty());
  std::vector<double> prev;
  for (double o : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    splats[0].opacity = o;
    const RenderOutput out = rasterize(splats, 32, 32);
    for (std::size_t i = 0; i < out.alpha.size(); ++i) {
      EXPECT_GE(out.alpha[i], 0.0);
      EXPECT_LT(out.alpha[i], 1.0);
      if (!prev.empty()) EXPECT_GE(out.alpha[i], prev[i] - 1e-15);
    }
    for (double v : out.image.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
    prev = out.alpha;
  }
}

TEST(RasterizeBackward, ZeroUpstreamGivesZeroGradients) {
  const RandomScene scene = random_scene(5);
  const RenderResult r = render(scene.cloud, scene.camera);
  const CloudGradients g = render_backward(Image(32, 32), r, scene.cloud, scene.camera);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_TRUE(g.center[i].isZero(0.0));
    EXPECT_TRUE(g.rotation[i].isZero(0.0));
    EXPECT_TRUE(g.scale[i].isZero(0.0));
    EXPECT_EQ(g.opacity[i], 0.0);
    EXPECT_TRUE(g.color[i].isZero(0.0));
  }
}

TEST(RasterizeBackward, SingleSplatColorGradientIsContributionWeight) {
  std::vector<Splat2D> splats{centered_splat(16, 16, 0.7, Vec3(0.2, 0.4, 0.9), 1.0, 0)};
  const RenderOutput out = rasterize(splats, 32, 32);
  Image grad(32, 32);
  for (int c = 0; c < 3; ++c) grad.at(16, 16, c) = 1.0;
  const SplatGradients g = rasterize_backward(grad, out, splats);
  EXPECT_TRUE(g.color[0].isApprox(Vec3::Constant(0.7), 1e-12));
  // d/d(opacity) of sum(0.7 c + 0.3) at the peak: sum(c - 1).
  EXPECT_NEAR(g.opacity[0], (0.2 - 1.0) + (0.4 - 1.0) + (0.9 - 1.0), 1e-12);
  // The mean is at the pixel center, so the footprint is stationary there.
  EXPECT_NEAR(g.mean[0].norm(), 0.0, 1e-12);
}

TEST(RasterizeBackward, RejectsMismatchedState) {
  std::vector<Splat2D> splats{centered_splat(4, 4, 0.5, Vec3::Ones(), 1.0, 0)};
  const RenderOutput out = rasterize(splats, 8, 8);
  EXPECT_THROW(rasterize_backward(Image(9, 8), out, splats), UsageError);
  splats.push_back(splats[0]);
  EXPECT_THROW(rasterize_backward(Image(8, 8), out, splats), UsageError);
}

TEST(RasterizeBackward, CulledGaussianGetsZeroGradient) {
  RandomScene scene = random_scene(9);
  scene.cloud.gaussians[2].center = scene.camera.position + 2.0 * (scene.camera.position - scene.camera.target);
  const RenderResult r = render(scene.cloud, scene.camera);
  const CloudGradients g = render_backward(scene.weights, r, scene.cloud, scene.camera);
  EXPECT_TRUE(g.center[2].isZero(0.0));
  EXPECT_EQ(g.opacity[2], 0.0);
}

TEST(RasterizeBackward, MatchesFiniteDifferencesOnRandomScenes) {
  AgreementTally tally;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    RandomScene scene = random_scene(seed);
    const RenderResult r = render(scene.cloud, scene.camera);
    const CloudGradients g = render_backward(scene.weights, r, scene.cloud, scene.camera);
    auto loss = [&] { return weighted_sum(render(scene.cloud, scene.camera).output.image, scene.weights); };
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
      Gaussian& gs = scene.cloud.gaussians[i];
      const std::string tag = "seed " + std::to_string(seed) + " gaussian " + std::to_string(i);
      for (int c = 0; c < 3; ++c) tally.add(g.center[i][c], central_difference(gs.center[c], 1e-3, loss), tag + " center");
      for (int c = 0; c < 4; ++c) tally.add(g.rotation[i][c], central_difference(gs.rotation[c], 1e-3, loss), tag + " rot");
      for (int c = 0; c < 3; ++c) tally.add(g.scale[i][c], central_difference(gs.scale[c], 1e-3, loss), tag + " scale");
      tally.add(g.opacity[i], central_difference(gs.opacity, 1e-3, loss), tag + " opacity");
      for (int c = 0; c < 3; ++c) tally.add(g.color[i][c], central_difference(gs.color[c], 1e-3, loss), tag + " color");
    }
  }
  EXPECT_GE(tally.fraction(), 0.99) << tally.agreed << "/" << tally.total << " worst: " << tally.worst_label;
  std::cout << "rasterizer FD agreement " << tally.agreed << "/" << tally.total << " worst " << tally.worst_label
            << "\n";
}
