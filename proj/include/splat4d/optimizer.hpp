// optimizer.hpp
//
// Adam training of the deformation field (and optionally the static cloud)
// against reference frames and keypoint tracks.

#pragma once

#include "splat4d/deformation.hpp"
#include "splat4d/losses.hpp"
#include "splat4d/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace splat4d {

struct LearningRates {
  double mlp = 1.6e-3;
  double centers = 1e-4;
  double rotations = 1e-3;
  double scales = 5e-3;
  double opacity = 5e-2;
  double color = 1e-2;

  bool operator==(const LearningRates&) const = default;
};

/// What the annealed value restricts. `window`: frames are sampled from the
/// first ceil(value * T) timesteps (at least one). `none`: the value is computed
/// and logged but sampling covers every supervised frame.
enum class AnnealBinding { window, none };

std::string to_string(AnnealBinding b);
AnnealBinding parse_anneal_binding(const std::string& s);

struct TrainConfig {
  int iterations = 500;
  int batch_size = 16;
  LearningRates lr;
  double t_max_start = 0.98;
  double t_max_end = 0.02;
  AnnealBinding anneal = AnnealBinding::window;
  LossWeights weights;
  std::uint64_t seed = 0;
  bool freeze_static = false;
  DeformFieldConfig field;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::vector<int> supervised_frames;  // reference frames usable for L_ref; empty means all

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

double linear_decay(double start, double end, int step, int total);

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-15;

  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update in place. Throws NumericalError naming
/// `group` on non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const std::string& group);

struct TrainInputs {
  GaussianCloud cloud;  // static cloud with keypoint anchors
  Camera camera;        // reference viewpoint
  FrameSequence reference;
  KeypointTrack tracks;

  void validate() const;
};

/// Loss and exact gradients of one iteration's objective.
struct Objective {
  LossReport report;
  std::vector<double> field_grad;
  CloudGradients cloud_grad;
};

/// L_ref over `batch` (frame indices, repeats allowed) plus KML and SCL over the
/// full trajectory, weighted by `weights`.
Objective evaluate_objective(const DeformField& field, const GaussianCloud& cloud, const TrainInputs& inputs,
                             std::span<const int> batch, const LossWeights& weights);

/// Frames eligible for sampling at `iteration`.
std::vector<int> sampling_window(const TrainConfig& cfg, int frame_count, int iteration);

struct StepInfo {
  int iteration = 0;  // 1-based
  double anneal = 0.0;
  std::vector<int> batch;
  LossReport report;
  const DeformField* field = nullptr;   // state after the update
  const GaussianCloud* cloud = nullptr;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(int iteration, const DeformField&, const GaussianCloud&)> on_checkpoint;
};

struct LossRecord {
  int iteration = 0;
  double ref = 0.0;
  double kml = 0.0;
  double scl = 0.0;
  double total = 0.0;

  bool operator==(const LossRecord&) const = default;
};

struct TrainResult {
  DeformField field;
  GaussianCloud cloud;
  std::vector<LossRecord> history;
};

/// Throws NumericalError on a non-finite loss or gradient; whatever the last
/// `on_checkpoint` call received is the last good state.
TrainResult train(const TrainInputs& inputs, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Deformed cloud at each timestep of `timesteps`.
std::vector<GaussianCloud> deform_sequence(const DeformField& field, const GaussianCloud& cloud,
                                           std::span<const double> timesteps);

}  // namespace splat4d
