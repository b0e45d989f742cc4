// metrics.cpp

#include "splat4d/metrics.hpp"

#include "splat4d/error.hpp"

#include <array>
#include <cmath>
#include <cstdio>

namespace splat4d {

namespace {

void require_same(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.data.size() != b.data.size() || a.data.empty())
    throw DataError("image sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                    std::to_string(b.width) + "x" + std::to_string(b.height));
}

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    w[i] = std::exp(-0.5 * x * x / (kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-region separable filter of one channel.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::array<double, kSsimWindow>& k) {
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h), out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b);
  double sum = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    const double d = a.data[k] - b.data[k];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b);
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw DataError("SSIM needs images of at least " + std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow));
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto taps = gaussian_taps();
  const std::size_t n = static_cast<std::size_t>(a.width) * a.height;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t p = 0; p < n; ++p) {
      x[p] = a.data[3 * p + c];
      y[p] = b.data[3 * p + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter_valid(x, a.width, a.height, taps), my = filter_valid(y, a.width, a.height, taps);
    const auto sxx = filter_valid(xx, a.width, a.height, taps), syy = filter_valid(yy, a.width, a.height, taps);
    const auto sxy = filter_valid(xy, a.width, a.height, taps);
    double acc = 0.0;
    for (std::size_t p = 0; p < mx.size(); ++p) {
      const double vx = sxx[p] - mx[p] * mx[p], vy = syy[p] - my[p] * my[p], cxy = sxy[p] - mx[p] * my[p];
      acc += (2.0 * mx[p] * my[p] + c1) * (2.0 * cxy + c2) /
             ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

double keypoint_rmse(const KeypointTrack& predicted, const KeypointTrack& reference) {
  if (predicted.n != reference.n || predicted.t != reference.t)
    throw DataError("keypoint tracks differ in shape: " + std::to_string(predicted.n) + "x" + std::to_string(predicted.t) +
                    " vs " + std::to_string(reference.n) + "x" + std::to_string(reference.t));
  double sum = 0.0;
  int count = 0;
  for (int f = 0; f < reference.t; ++f)
    for (int i = 0; i < reference.n; ++i)
      if (predicted.is_visible(f, i) && reference.is_visible(f, i)) {
        sum += (predicted.point(f, i) - reference.point(f, i)).squaredNorm();
        ++count;
      }
  if (count == 0) throw DataError("no keypoint is visible in both tracks");
  return std::sqrt(sum / count);
}

EvalReport evaluate(std::span<const Image> rendered, std::span<const Image> reference, const KeypointTrack* predicted,
                    const KeypointTrack* reference_tracks, std::span<const int> frames) {
  if (rendered.size() != reference.size())
    throw DataError("frame counts differ: " + std::to_string(rendered.size()) + " vs " + std::to_string(reference.size()));
  EvalReport r;
  if (frames.empty())
    for (std::size_t f = 0; f < rendered.size(); ++f) r.frames.push_back(static_cast<int>(f));
  else
    r.frames.assign(frames.begin(), frames.end());
  if (r.frames.empty()) throw DataError("no frames to evaluate");
  for (int f : r.frames) {
    if (f < 0 || static_cast<std::size_t>(f) >= rendered.size())
      throw UsageError("frame " + std::to_string(f) + " out of range");
    r.psnr_per_frame.push_back(psnr(rendered[f], reference[f]));
    r.ssim_per_frame.push_back(ssim(rendered[f], reference[f]));
    r.psnr_mean += r.psnr_per_frame.back();
    r.ssim_mean += r.ssim_per_frame.back();
  }
  r.psnr_mean /= static_cast<double>(r.frames.size());
  r.ssim_mean /= static_cast<double>(r.frames.size());
  if (predicted && reference_tracks) r.keypoint_rmse = keypoint_rmse(*predicted, *reference_tracks);
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j = {{"psnr_mean", r.psnr_mean},
                      {"ssim_mean", r.ssim_mean},
                      {"psnr_per_frame", r.psnr_per_frame},
                      {"ssim_per_frame", r.ssim_per_frame},
                      {"frames", r.frames}};
  j["keypoint_rmse"] = r.keypoint_rmse ? nlohmann::json(*r.keypoint_rmse) : nlohmann::json(nullptr);
  j["lpips"] = r.lpips ? nlohmann::json(*r.lpips) : nlohmann::json(nullptr);
  return j;
}

std::string format_comparison_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 6;
  for (const auto& [label, _] : rows) width = std::max(width, label.size());
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %7s  %12s\n", static_cast<int>(width), "method", "PSNR(dB)", "SSIM",
                "KP-RMSE(px)");
  out += buf;
  out += std::string(width + 36, '-') + "\n";
  for (const auto& [label, r] : rows) {
    char kp[32] = "-";
    if (r.keypoint_rmse) std::snprintf(kp, sizeof kp, "%.3f", *r.keypoint_rmse);
    std::snprintf(buf, sizeof buf, "%-*s  %9.3f  %7.4f  %12s\n", static_cast<int>(width), label.c_str(), r.psnr_mean,
                  r.ssim_mean, kp);
    out += buf;
  }
  return out;
}

std::string format_report_table(const EvalReport& r, const std::string& label) {
  return format_comparison_table({{label, r}});
}

}  // namespace splat4d
