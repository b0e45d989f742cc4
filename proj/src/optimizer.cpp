// optimizer.cpp

#include "splat4d/optimizer.hpp"

#include "splat4d/error.hpp"
#include "splat4d/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace splat4d {

namespace {

constexpr double kMinOpacity = 1e-6;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Unconstrained copies of the static cloud parameters.
struct StaticParams {
  std::vector<double> centers, rotations, log_scales, logit_opacity, colors;

  explicit StaticParams(const GaussianCloud& cloud) {
    for (const Gaussian& g : cloud.gaussians) {
      centers.insert(centers.end(), g.center.data(), g.center.data() + 3);
      rotations.insert(rotations.end(), g.rotation.data(), g.rotation.data() + 4);
      for (int c = 0; c < 3; ++c) log_scales.push_back(std::log(g.scale[c]));
      logit_opacity.push_back(logit(std::clamp(g.opacity, kMinOpacity, 1.0 - kMinOpacity)));
      colors.insert(colors.end(), g.color.data(), g.color.data() + 3);
    }
  }

  void write_to(GaussianCloud& cloud) const {
    const double lo = logit(kMinOpacity), hi = logit(1.0 - kMinOpacity);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      Gaussian& g = cloud.gaussians[i];
      g.center = Vec3(centers[3 * i], centers[3 * i + 1], centers[3 * i + 2]);
      g.rotation = Quat(rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]);
      g.scale = Vec3(std::exp(log_scales[3 * i]), std::exp(log_scales[3 * i + 1]), std::exp(log_scales[3 * i + 2]));
      g.opacity = sigmoid(std::clamp(logit_opacity[i], lo, hi));
      g.color = Vec3(colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]);
    }
  }

  void project_constraints() {
    for (std::size_t i = 0; i < rotations.size(); i += 4) {
      Eigen::Map<Eigen::Vector4d> q(rotations.data() + i);
      const double n = q.norm();
      if (!(n > 1e-12) || !std::isfinite(n)) throw NumericalError("rotation quaternion collapsed to zero");
      q /= n;
    }
    const double lo = logit(kMinOpacity), hi = logit(1.0 - kMinOpacity);
    for (double& o : logit_opacity) o = std::clamp(o, lo, hi);
    for (double& c : colors) c = std::clamp(c, 0.0, 1.0);
  }
};

struct StaticAdam {
  AdamState centers, rotations, scales, opacity, colors;
  explicit StaticAdam(std::size_t m)
      : centers(3 * m), rotations(4 * m), scales(3 * m), opacity(m), colors(3 * m) {}
};

}  // namespace

std::string to_string(AnnealBinding b) { return b == AnnealBinding::window ? "window" : "none"; }

AnnealBinding parse_anneal_binding(const std::string& s) {
  if (s == "window") return AnnealBinding::window;
  if (s == "none") return AnnealBinding::none;
  throw UsageError("unknown anneal binding '" + s + "' (expected window or none)");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw UsageError("iterations must be at least 1");
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  for (double r : {lr.mlp, lr.centers, lr.rotations, lr.scales, lr.opacity, lr.color})
    if (!(r > 0.0) || !std::isfinite(r)) throw UsageError("learning rates must be positive and finite");
  if (!(0.0 <= t_max_end && t_max_end <= t_max_start && t_max_start <= 1.0))
    throw UsageError("anneal schedule needs 0 <= end <= start <= 1");
  if (checkpoint_every < 0) throw UsageError("checkpoint cadence must be non-negative");
  weights.validate();
  for (int f : supervised_frames)
    if (f < 0) throw UsageError("supervised frame indices must be non-negative");
}

double linear_decay(double start, double end, int step, int total) {
  if (total < 1 || step < 0 || step > total) throw UsageError("linear_decay needs total >= 1 and 0 <= step <= total");
  const double s = static_cast<double>(step) / static_cast<double>(total);
  return (1.0 - s) * start + s * end;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const std::string& group) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw UsageError(group + ": parameter, gradient and moment sizes differ");
  if (!all_finite(grads)) throw NumericalError(group + ": non-finite gradient");
  ++state.step;
  const double c1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = AdamState::beta1 * state.m[k] + (1.0 - AdamState::beta1) * grads[k];
    state.v[k] = AdamState::beta2 * state.v[k] + (1.0 - AdamState::beta2) * grads[k] * grads[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::epsilon);
  }
}

void TrainInputs::validate() const {
  cloud.validate();
  camera.validate();
  reference.validate();
  if (reference.size() == 0) throw DataError("no reference frames");
  for (std::size_t f = 0; f < reference.size(); ++f)
    if (reference.frames[f].width != camera.image_width || reference.frames[f].height != camera.image_height)
      throw DataError("reference frame " + std::to_string(f) + " does not match the camera resolution");
  tracks.validate();
  if (tracks.t != static_cast<int>(reference.size()))
    throw DataError("keypoint tracks cover " + std::to_string(tracks.t) + " frames, reference has " +
                    std::to_string(reference.size()));
  if (tracks.n != static_cast<int>(cloud.anchors.size()))
    throw DataError("keypoint tracks have " + std::to_string(tracks.n) + " points, cloud has " +
                    std::to_string(cloud.anchors.size()) + " anchors");
  if (tracks.image_width != camera.image_width || tracks.image_height != camera.image_height)
    throw DataError("keypoint tracks use a different image size than the camera");
}

Objective evaluate_objective(const DeformField& field, const GaussianCloud& cloud, const TrainInputs& inputs,
                             std::span<const int> batch, const LossWeights& weights) {
  const int frames = static_cast<int>(inputs.reference.size());
  const std::size_t m = cloud.size();
  if (batch.empty()) throw UsageError("empty frame batch");
  for (int f : batch)
    if (f < 0 || f >= frames) throw UsageError("batch frame " + std::to_string(f) + " out of range");

  std::vector<DeformPass> passes;
  passes.reserve(frames);
  for (int f = 0; f < frames; ++f) passes.push_back(deform(field, cloud, inputs.reference.timesteps[f]));

  std::vector<DeformedCloudGradients> dgrad(frames, DeformedCloudGradients(m));
  std::vector<bool> touched(frames, false);
  Objective obj;
  obj.cloud_grad = CloudGradients(m);

  // Reference MSE on the sampled frames; each distinct frame is rendered once.
  std::map<int, std::pair<GaussianCloud, RenderResult>> renders;
  for (int f : batch)
    if (!renders.count(f)) {
      GaussianCloud deformed = passes[f].cloud.materialize();
      RenderResult r = render(deformed, inputs.camera);
      renders.emplace(f, std::make_pair(std::move(deformed), std::move(r)));
    }
  std::vector<Image> rendered, reference;
  for (int f : batch) {
    rendered.push_back(renders.at(f).second.output.image);
    reference.push_back(inputs.reference.frames[f]);
  }
  const RefLoss ref = loss_ref(rendered, reference);
  if (weights.ref != 0.0) {
    std::map<int, Image> image_grad;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto [it, fresh] = image_grad.try_emplace(batch[b], ref.grad[b]);
      if (!fresh)
        for (std::size_t k = 0; k < it->second.data.size(); ++k) it->second.data[k] += ref.grad[b].data[k];
    }
    for (auto& [f, g] : image_grad) {
      for (double& v : g.data) v *= weights.ref;
      const auto& [deformed, result] = renders.at(f);
      const CloudGradients cg = render_backward(g, result, deformed, inputs.camera);
      for (std::size_t i = 0; i < m; ++i) {
        dgrad[f].centers[i] += cg.center[i];
        dgrad[f].rotations[i] += cg.rotation[i];
        dgrad[f].scales[i] += cg.scale[i];
        obj.cloud_grad.opacity[i] += cg.opacity[i];
        obj.cloud_grad.color[i] += cg.color[i];
      }
      touched[f] = true;
    }
  }

  // Keypoint match over the whole trajectory.
  std::vector<KeypointProjection> projections;
  projections.reserve(frames);
  for (int f = 0; f < frames; ++f) projections.push_back(predict_keypoints(passes[f].cloud, inputs.camera));
  const KmlLoss kml = loss_kml(assemble_track(projections, inputs.camera, false), inputs.tracks);
  if (weights.kml != 0.0 && !cloud.anchors.empty()) {
    const std::size_t n = cloud.anchors.size();
    for (int f = 0; f < frames; ++f) {
      const std::span<const Vec2> slice(kml.grad.data() + f * n, n);
      const std::vector<Vec3> g = keypoint_backward(projections[f], slice);
      for (std::size_t a = 0; a < n; ++a) dgrad[f].centers[cloud.anchors[a]] += weights.kml * g[a];
      touched[f] = true;
    }
  }

  // Spatio-temporal consistency of all centers.
  SclLoss scl;
  if (frames >= 2) {
    std::vector<std::vector<Vec3>> trajectory;
    trajectory.reserve(frames);
    for (const DeformPass& p : passes) trajectory.push_back(p.cloud.centers);
    scl = loss_scl(trajectory);
    if (weights.scl != 0.0)
      for (int f = 0; f < frames; ++f) {
        for (std::size_t i = 0; i < m; ++i) dgrad[f].centers[i] += weights.scl * scl.grad[f][i];
        touched[f] = true;
      }
  }

  obj.report = loss_pal(ref, kml, scl, weights);
  obj.field_grad.assign(field.parameter_count(), 0.0);
  for (int f = 0; f < frames; ++f) {
    if (!touched[f]) continue;
    const DeformBackward b = deform_backward(field, cloud, passes[f].tape, dgrad[f]);
    for (std::size_t k = 0; k < b.weights.size(); ++k) obj.field_grad[k] += b.weights[k];
    for (std::size_t i = 0; i < m; ++i) {
      obj.cloud_grad.center[i] += b.base.center[i];
      obj.cloud_grad.rotation[i] += b.base.rotation[i];
      obj.cloud_grad.scale[i] += b.base.scale[i];
    }
  }
  return obj;
}

std::vector<int> sampling_window(const TrainConfig& cfg, int frame_count, int iteration) {
  std::vector<int> supervised;
  if (cfg.supervised_frames.empty()) {
    for (int f = 0; f < frame_count; ++f) supervised.push_back(f);
  } else {
    for (int f : cfg.supervised_frames) {
      if (f >= frame_count) throw UsageError("supervised frame " + std::to_string(f) + " out of range");
      supervised.push_back(f);
    }
  }
  if (cfg.anneal == AnnealBinding::none) return supervised;
  const double value = linear_decay(cfg.t_max_start, cfg.t_max_end, iteration, std::max(1, cfg.iterations - 1));
  const int window = std::max(1, static_cast<int>(std::ceil(value * frame_count)));
  std::vector<int> inside;
  for (int f : supervised)
    if (f < window) inside.push_back(f);
  return inside.empty() ? supervised : inside;
}

std::vector<GaussianCloud> deform_sequence(const DeformField& field, const GaussianCloud& cloud,
                                           std::span<const double> timesteps) {
  std::vector<GaussianCloud> out;
  out.reserve(timesteps.size());
  for (double t : timesteps) out.push_back(deform(field, cloud, t).cloud.materialize());
  return out;
}

TrainResult train(const TrainInputs& inputs, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  inputs.validate();
  const int frames = static_cast<int>(inputs.reference.size());

  TrainResult result{DeformField::initialize(cfg.field, cfg.seed), inputs.cloud, {}};
  DeformField& field = result.field;
  GaussianCloud& cloud = result.cloud;
  const std::size_t m = cloud.size();

  StaticParams params(cloud);
  StaticAdam static_adam(m);
  AdamState field_adam(field.parameter_count());
  std::mt19937_64 sampler(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  for (int it = 1; it <= cfg.iterations; ++it) {
    const std::vector<int> candidates = sampling_window(cfg, frames, it - 1);
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    StepInfo info;
    info.iteration = it;
    info.anneal = linear_decay(cfg.t_max_start, cfg.t_max_end, it - 1, std::max(1, cfg.iterations - 1));
    for (int b = 0; b < cfg.batch_size; ++b) info.batch.push_back(candidates[pick(sampler)]);

    Objective obj = evaluate_objective(field, cloud, inputs, info.batch, cfg.weights);
    if (!std::isfinite(obj.report.total))
      throw NumericalError("non-finite loss at iteration " + std::to_string(it));

    adam_step(field.parameters(), obj.field_grad, field_adam, cfg.lr.mlp, "deformation field");

    if (!cfg.freeze_static) {
      std::vector<double> gc, gr, gs, go, gcol;
      for (std::size_t i = 0; i < m; ++i) {
        const Gaussian& g = cloud.gaussians[i];
        const CloudGradients& d = obj.cloud_grad;
        gc.insert(gc.end(), d.center[i].data(), d.center[i].data() + 3);
        gr.insert(gr.end(), d.rotation[i].data(), d.rotation[i].data() + 4);
        for (int c = 0; c < 3; ++c) gs.push_back(d.scale[i][c] * g.scale[c]);
        go.push_back(d.opacity[i] * g.opacity * (1.0 - g.opacity));
        gcol.insert(gcol.end(), d.color[i].data(), d.color[i].data() + 3);
      }
      adam_step(params.centers, gc, static_adam.centers, cfg.lr.centers, "centers");
      adam_step(params.rotations, gr, static_adam.rotations, cfg.lr.rotations, "rotations");
      adam_step(params.log_scales, gs, static_adam.scales, cfg.lr.scales, "scales");
      adam_step(params.logit_opacity, go, static_adam.opacity, cfg.lr.opacity, "opacity");
      adam_step(params.colors, gcol, static_adam.colors, cfg.lr.color, "colors");
      params.project_constraints();
      params.write_to(cloud);
    }

    const LossReport& r = obj.report;
    result.history.push_back({it, r.ref, r.kml, r.scl, r.total});
    info.report = std::move(obj.report);
    info.field = &field;
    info.cloud = &cloud;
    if (hooks.on_step) hooks.on_step(info);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(it, field, cloud);
  }
  return result;
}

}  // namespace splat4d
