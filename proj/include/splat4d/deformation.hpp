// deformation.hpp
//
// Time-conditioned deformation field: maps each static Gaussian and a normalized
// timestep to center, rotation and log-scale deltas through a small MLP over
// frequency-encoded inputs.

#pragma once

#include "splat4d/rasterizer.hpp"
#include "splat4d/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace splat4d {

/// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)],
/// where each sin/cos block covers every component of x.
std::vector<double> positional_encode(std::span<const double> x, int bands);

inline constexpr int encoded_size(int dims, int bands) { return dims * (1 + 2 * bands); }

struct DeformFieldConfig {
  int hidden = 64;
  int center_bands = 6;
  int time_bands = 4;

  bool operator==(const DeformFieldConfig&) const = default;
};

/// MLP in -> hidden -> hidden -> 10 with ReLU hidden activations. Parameters
/// live in one contiguous buffer: W1, b1, W2, b2, W3, b3 (column-major).
class DeformField {
 public:
  static constexpr int kOutputs = 10;  // dcenter(3) + dquat(4) + dlog_scale(3)

  DeformField() : DeformField(DeformFieldConfig{}) {}
  /// All-zero parameters.
  explicit DeformField(const DeformFieldConfig& config);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) hidden layers, zero output layer,
  /// so the field starts as the identity deformation.
  static DeformField initialize(const DeformFieldConfig& config, std::uint64_t seed);

  const DeformFieldConfig& config() const { return config_; }
  int input_dim() const { return encoded_size(3, config_.center_bands) + encoded_size(1, config_.time_bands); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  MatrixMap weight(int layer) { return {params_.data() + w_offset(layer), rows(layer), cols(layer)}; }
  ConstMatrixMap weight(int layer) const { return {params_.data() + w_offset(layer), rows(layer), cols(layer)}; }
  VectorMap bias(int layer) { return {params_.data() + b_offset(layer), rows(layer)}; }
  ConstVectorMap bias(int layer) const { return {params_.data() + b_offset(layer), rows(layer)}; }

  bool operator==(const DeformField&) const = default;

 private:
  int rows(int layer) const { return layer == 2 ? kOutputs : config_.hidden; }
  int cols(int layer) const { return layer == 0 ? input_dim() : config_.hidden; }
  std::size_t w_offset(int layer) const;
  std::size_t b_offset(int layer) const { return w_offset(layer) + static_cast<std::size_t>(rows(layer)) * cols(layer); }

  DeformFieldConfig config_;
  std::vector<double> params_;
};

/// Deformed Gaussians at one timestep. `base` is non-owning and must outlive it.
struct DeformedCloud {
  const GaussianCloud* base = nullptr;
  std::vector<Vec3> centers;
  std::vector<Quat> rotations;
  std::vector<Vec3> scales;
  double timestep = 0.0;

  std::size_t size() const { return centers.size(); }
  /// Deformed geometry with the base opacity, color and anchors.
  GaussianCloud materialize() const;
};

/// Activations saved by `deform` for the reverse pass.
struct DeformTape {
  Eigen::MatrixXd input;   // input_dim x M
  Eigen::MatrixXd z1, z2;  // hidden x M, pre-activation
  Eigen::MatrixXd output;  // 10 x M
  double timestep = 0.0;
};

struct DeformPass {
  DeformedCloud cloud;
  DeformTape tape;
};

DeformPass deform(const DeformField& field, const GaussianCloud& cloud, double tau);

struct DeformedCloudGradients {
  std::vector<Vec3> centers;
  std::vector<Quat> rotations;
  std::vector<Vec3> scales;

  explicit DeformedCloudGradients(std::size_t m = 0)
      : centers(m, Vec3::Zero()), rotations(m, Quat::Zero()), scales(m, Vec3::Zero()) {}
  std::size_t size() const { return centers.size(); }
};

struct DeformBackward {
  std::vector<double> weights;  // same layout as DeformField::parameters()
  CloudGradients base;          // center, rotation and scale of the static cloud; opacity/color zero
};

/// Exact reverse-mode gradients of the deformed geometry with respect to the MLP
/// parameters and the static cloud.
DeformBackward deform_backward(const DeformField& field, const GaussianCloud& base, const DeformTape& tape,
                               const DeformedCloudGradients& grads);

}  // namespace splat4d
