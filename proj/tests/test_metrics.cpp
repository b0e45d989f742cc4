#include "splat4d/error.hpp"
#include "splat4d/metrics.hpp"
#include "splat4d/scene_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace splat4d;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h);
  for (double& v : img.data) v = u(rng);
  return img;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
  const Image a = random_image(8, 8, 1);
  EXPECT_EQ(psnr(a, a), 100.0);
}

TEST(Psnr, HalfOffsetConstantImages) {
  EXPECT_NEAR(psnr(Image(5, 7, 0.25), Image(5, 7, 0.75)), 10.0 * std::log10(4.0), 1e-9);
  EXPECT_NEAR(psnr(Image(5, 7, 0.25), Image(5, 7, 0.75)), 6.0206, 1e-4);
}

TEST(Psnr, MatchesTwoPassOracleAndIsSymmetric) {
  const Image a = random_image(9, 6, 2), b = random_image(9, 6, 3);
  double mean_a = 0.0;
  for (double v : a.data) mean_a += v;
  mean_a /= a.data.size();
  // Second pass: squared error accumulated channel by channel.
  double sse = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 9; ++x) sse += std::pow(a.at(x, y, c) - b.at(x, y, c), 2);
  EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(sse / 162.0), 1e-10);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  const Image clean(32, 32, 0.5);
  std::vector<double> means;
  for (double amp : {0.01, 0.05, 0.1, 0.2}) {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-amp, amp);
      Image noisy = clean;
      for (double& v : noisy.data) v += u(rng);
      acc += psnr(clean, noisy);
    }
    means.push_back(acc / 5.0);
  }
  for (std::size_t i = 1; i < means.size(); ++i) EXPECT_LT(means[i], means[i - 1]);
}

TEST(Psnr, RejectsSizeMismatch) { EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), DataError); }

TEST(Ssim, IdenticalImagesGiveOne) {
  const Image a = random_image(20, 16, 4);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantHalfAgainstItsNegative) {
  const Image a(16, 16, 0.5);
  Image neg = a;
  for (double& v : neg.data) v = 1.0 - v;
  EXPECT_NEAR(ssim(a, neg), 1.0, 1e-12);
}

TEST(Ssim, MatchesReferenceImplementationFixture) {
  const Image a = load_png("fixtures/ssim_pair_a.png");
  const Image b = load_png("fixtures/ssim_pair_b.png");
  const auto expected = nlohmann::json::parse(read_text("fixtures/ssim_pair.json"));
  EXPECT_NEAR(ssim(a, b), expected["ssim"].get<double>(), 1e-4);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_NEAR(psnr(a, b), expected["psnr"].get<double>(), 1e-9);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) { EXPECT_THROW(ssim(Image(10, 30), Image(10, 30)), DataError); }

TEST(Ssim, BoundedAboveByOne) {
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_LE(ssim(random_image(16, 16, s), random_image(16, 16, s + 10)), 1.0);
}

TEST(KeypointRmse, Cases) {
  KeypointTrack a(2, 2, 32, 32), b(2, 2, 32, 32);
  EXPECT_EQ(keypoint_rmse(a, b), 0.0);
  KeypointTrack single(1, 1, 32, 32), offset(1, 1, 32, 32);
  offset.point(0, 0) = Vec2(3.0, 4.0);
  EXPECT_NEAR(keypoint_rmse(offset, single), 5.0, 1e-12);
  single.set_visible(0, 0, false);
  EXPECT_THROW(keypoint_rmse(offset, single), DataError);
  EXPECT_THROW(keypoint_rmse(a, single), DataError);
}

TEST(EvalReport, AggregatesFramesAndSerializes) {
  const std::vector<Image> a{Image(12, 12, 0.25), Image(12, 12, 0.5)};
  const std::vector<Image> b{Image(12, 12, 0.75), Image(12, 12, 0.5)};
  KeypointTrack ta(1, 2, 12, 12), tb(1, 2, 12, 12);
  tb.point(1, 0) = Vec2(3.0, 4.0);
  const EvalReport r = evaluate(a, b, &ta, &tb);
  EXPECT_NEAR(r.psnr_mean, 0.5 * (10.0 * std::log10(4.0) + 100.0), 1e-9);
  EXPECT_NEAR(*r.keypoint_rmse, std::sqrt(25.0 / 2.0), 1e-12);
  const std::vector<int> only{1};
  EXPECT_EQ(evaluate(a, b, nullptr, nullptr, only).psnr_mean, 100.0);

  const auto j = report_to_json(r);
  EXPECT_EQ(j["psnr_per_frame"].size(), 2u);
  EXPECT_TRUE(j["lpips"].is_null());
  const std::string table = format_report_table(r, "full");
  EXPECT_NE(table.find("PSNR"), std::string::npos);
  EXPECT_NE(table.find("full"), std::string::npos);
}
