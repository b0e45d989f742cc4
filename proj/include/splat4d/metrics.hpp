// metrics.hpp

#pragma once

#include "splat4d/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace splat4d {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// 10 log10(1 / MSE) over all pixels and channels, capped for identical images.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over the valid window positions, per channel, then averaged.
double ssim(const Image& a, const Image& b);

/// Root mean squared pixel distance over points visible in both tracks.
double keypoint_rmse(const KeypointTrack& predicted, const KeypointTrack& reference);

struct EvalReport {
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  std::optional<double> keypoint_rmse;
  std::optional<double> lpips;  // reserved for externally computed values
  std::vector<double> psnr_per_frame;
  std::vector<double> ssim_per_frame;
  std::vector<int> frames;  // indices evaluated
};

/// Metrics over `frames` (all when empty); keypoints are compared when both
/// tracks are given.
EvalReport evaluate(std::span<const Image> rendered, std::span<const Image> reference,
                    const KeypointTrack* predicted = nullptr, const KeypointTrack* reference_tracks = nullptr,
                    std::span<const int> frames = {});

nlohmann::json report_to_json(const EvalReport& r);
std::string format_report_table(const EvalReport& r, const std::string& label = "run");
std::string format_comparison_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace splat4d
