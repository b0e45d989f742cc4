// cli.cpp

#include "splat4d/cli.hpp"

#include "splat4d/error.hpp"
#include "splat4d/losses.hpp"
#include "splat4d/metrics.hpp"
#include "splat4d/optimizer.hpp"
#include "splat4d/rasterizer.hpp"
#include "splat4d/scene_io.hpp"

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace splat4d {

using json = nlohmann::json;

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_text(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw DataError(path.string() + ": hashing failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

namespace {

using Clock = std::chrono::steady_clock;

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  json config = json::object();
  json inputs = json::array();
  json outputs = json::array();
  Clock::time_point start = Clock::now();

  void input(const fs::path& p, const fs::path& root) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) input(f, root);
      return;
    }
    inputs.push_back({{"path", fs::relative(p, root).generic_string()}, {"sha256", sha256_file(p)}});
  }
  void output(const fs::path& p, const fs::path& root) { outputs.push_back(fs::relative(p, root).generic_string()); }

  void write(const fs::path& dir) const {
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const json j = {{"command", command},
                    {"args", args},
                    {"config", config},
                    {"inputs", inputs},
                    {"outputs", outputs},
                    {"timings", {{"wall_seconds", seconds}}},
                    {"versions", {{"splat4d", kVersion}, {"archive", kArchiveVersion}}}};
    write_text(dir / "manifest.json", j.dump(2) + "\n");
  }
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad frame index '" + item + "'");
    }
  }
  return out;
}

// synth

struct SynthArgs {
  SynthConfig cfg;
  std::string kind = "rigid_rotation";
  std::string config_path;
  std::string out = "scene";
  CLI::App* app = nullptr;
};

void add_synth(CLI::App& root, SynthArgs& a) {
  a.app = root.add_subcommand("synth", "Generate a synthetic motion scene: cloud, frames, tracks, camera");
  auto* s = a.app;
  s->add_option("--config", a.config_path, "JSON synth config; flags override it");
  s->add_option("--kind", a.kind, "rigid_rotation | sinusoidal_articulation | translation");
  s->add_option("--gaussians", a.cfg.gaussians, "Number of Gaussians M");
  s->add_option("--keypoints", a.cfg.keypoints, "Number of anchored keypoints N");
  s->add_option("--frames", a.cfg.frames, "Number of timesteps T");
  s->add_option("--size", a.cfg.image_size, "Square image size in pixels");
  s->add_option("--radius", a.cfg.radius, "Radius of the initial sphere");
  s->add_option("--amplitude", a.cfg.amplitude, "Motion amplitude (degrees, or world units for translation)");
  s->add_option("--camera-radius", a.cfg.camera_radius, "Distance of the reference camera from the origin");
  s->add_option("--azimuth", a.cfg.camera_azimuth, "Reference camera azimuth in degrees");
  s->add_option("--elevation", a.cfg.camera_elevation, "Reference camera elevation in degrees");
  s->add_option("--seed", a.cfg.seed, "Random seed");
  s->add_option("--out", a.out, "Output scene directory")->capture_default_str();
}

SynthConfig resolve_synth(const SynthArgs& a, const fs::path& workdir) {
  SynthConfig cfg;
  if (!a.config_path.empty()) cfg = synth_config_from_json(json::parse(read_text(workdir / a.config_path)));
  auto set = [&](const char* flag, auto& dst, const auto& src) {
    if (a.app->get_option(flag)->count() > 0) dst = src;
  };
  if (a.app->get_option("--kind")->count() > 0) cfg.kind = parse_motion_kind(a.kind);
  set("--gaussians", cfg.gaussians, a.cfg.gaussians);
  set("--keypoints", cfg.keypoints, a.cfg.keypoints);
  set("--frames", cfg.frames, a.cfg.frames);
  set("--size", cfg.image_size, a.cfg.image_size);
  set("--radius", cfg.radius, a.cfg.radius);
  set("--amplitude", cfg.amplitude, a.cfg.amplitude);
  set("--camera-radius", cfg.camera_radius, a.cfg.camera_radius);
  set("--azimuth", cfg.camera_azimuth, a.cfg.camera_azimuth);
  set("--elevation", cfg.camera_elevation, a.cfg.camera_elevation);
  set("--seed", cfg.seed, a.cfg.seed);
  return cfg;
}

int cmd_synth(const SynthArgs& a, const fs::path& workdir, const std::vector<std::string>& args, std::ostream& out) {
  Manifest m{"synth", args};
  const SynthConfig cfg = resolve_synth(a, workdir);
  if (!a.config_path.empty()) m.input(workdir / a.config_path, workdir);
  m.config = synth_config_to_json(cfg);
  const SynthScene s = synth_scene(cfg);
  const fs::path dir = workdir / a.out;
  fs::create_directories(dir);
  save_cloud(s.cloud, dir / "cloud.ply");
  save_frames(s.frames, dir / "frames");
  save_tracks(s.tracks, dir / "tracks.json");
  save_camera(s.camera, dir / "camera.json");
  write_text(dir / "synth.json", synth_config_to_json(cfg).dump(2) + "\n");
  for (const char* f : {"cloud.ply", "frames", "tracks.json", "camera.json", "synth.json"}) m.output(dir / f, workdir);
  m.write(dir);
  out << "wrote " << to_string(cfg.kind) << " scene (" << cfg.gaussians << " Gaussians, " << cfg.frames
      << " frames) to " << dir.string() << "\n";
  return kExitOk;
}

// train

struct TrainArgs {
  TrainConfig cfg;
  std::string config_path;
  std::string scene = "scene";
  std::string cloud, frames, tracks, camera;
  std::string out = "run";
  std::string anneal = "window";
  int ref_stride = 1;
  bool no_kml = false, no_scl = false, no_support = false, freeze_static = false;
  CLI::App* app = nullptr;
};

void add_train(CLI::App& root, TrainArgs& a) {
  a.app = root.add_subcommand("train", "Fit the deformation field to reference frames and keypoint tracks");
  auto* t = a.app;
  t->add_option("--config", a.config_path, "JSON train config; flags override it");
  t->add_option("--scene", a.scene, "Scene directory with cloud.ply, frames/, tracks.json, camera.json")
      ->capture_default_str();
  t->add_option("--cloud", a.cloud, "Cloud PLY (default <scene>/cloud.ply)");
  t->add_option("--frames", a.frames, "Reference frame directory (default <scene>/frames)");
  t->add_option("--tracks", a.tracks, "Keypoint tracks JSON (default <scene>/tracks.json)");
  t->add_option("--camera", a.camera, "Reference camera JSON (default <scene>/camera.json)");
  t->add_option("--out", a.out, "Run directory")->capture_default_str();
  t->add_option("--iterations", a.cfg.iterations, "Training iterations")->capture_default_str();
  t->add_option("--batch", a.cfg.batch_size, "Timesteps sampled per iteration")->capture_default_str();
  t->add_option("--seed", a.cfg.seed, "Random seed")->capture_default_str();
  t->add_option("--lr-mlp", a.cfg.lr.mlp, "Learning rate of the deformation field");
  t->add_option("--lr-centers", a.cfg.lr.centers, "Learning rate of static centers");
  t->add_option("--lr-rotations", a.cfg.lr.rotations, "Learning rate of static rotations");
  t->add_option("--lr-scales", a.cfg.lr.scales, "Learning rate of static log-scales");
  t->add_option("--lr-opacity", a.cfg.lr.opacity, "Learning rate of static opacity logits");
  t->add_option("--lr-color", a.cfg.lr.color, "Learning rate of static colors");
  t->add_option("--w-ref", a.cfg.weights.ref, "Weight of the reference MSE");
  t->add_option("--w-kml", a.cfg.weights.kml, "Weight of the keypoint match loss");
  t->add_option("--w-scl", a.cfg.weights.scl, "Weight of the consistency loss");
  t->add_flag("--no-kml", a.no_kml, "Disable the keypoint match loss");
  t->add_flag("--no-scl", a.no_scl, "Disable the consistency loss");
  t->add_flag("--no-support", a.no_support, "Disable both pose-alignment terms");
  t->add_option("--t-max-start", a.cfg.t_max_start, "Annealed value at the first iteration");
  t->add_option("--t-max-end", a.cfg.t_max_end, "Annealed value at the last iteration");
  t->add_option("--anneal", a.anneal, "What the annealed value restricts: window | none");
  t->add_option("--ref-stride", a.ref_stride, "Use only every k-th reference frame for the MSE term");
  t->add_flag("--freeze-static", a.freeze_static, "Keep the static cloud fixed");
  t->add_option("--hidden", a.cfg.field.hidden, "Hidden width of the deformation field");
  t->add_option("--center-bands", a.cfg.field.center_bands, "Frequency bands for centers");
  t->add_option("--time-bands", a.cfg.field.time_bands, "Frequency bands for time");
  t->add_option("--checkpoint-every", a.cfg.checkpoint_every, "Write a checkpoint every k iterations (0: end only)");
}

TrainConfig resolve_train(const TrainArgs& a, const fs::path& workdir) {
  TrainConfig cfg;
  if (!a.config_path.empty()) cfg = train_config_from_json(json::parse(read_text(workdir / a.config_path)));
  auto given = [&](const char* flag) { return a.app->get_option(flag)->count() > 0; };
  auto set = [&](const char* flag, auto& dst, const auto& src) {
    if (given(flag)) dst = src;
  };
  set("--iterations", cfg.iterations, a.cfg.iterations);
  set("--batch", cfg.batch_size, a.cfg.batch_size);
  set("--seed", cfg.seed, a.cfg.seed);
  set("--lr-mlp", cfg.lr.mlp, a.cfg.lr.mlp);
  set("--lr-centers", cfg.lr.centers, a.cfg.lr.centers);
  set("--lr-rotations", cfg.lr.rotations, a.cfg.lr.rotations);
  set("--lr-scales", cfg.lr.scales, a.cfg.lr.scales);
  set("--lr-opacity", cfg.lr.opacity, a.cfg.lr.opacity);
  set("--lr-color", cfg.lr.color, a.cfg.lr.color);
  set("--w-ref", cfg.weights.ref, a.cfg.weights.ref);
  set("--w-kml", cfg.weights.kml, a.cfg.weights.kml);
  set("--w-scl", cfg.weights.scl, a.cfg.weights.scl);
  set("--t-max-start", cfg.t_max_start, a.cfg.t_max_start);
  set("--t-max-end", cfg.t_max_end, a.cfg.t_max_end);
  set("--hidden", cfg.field.hidden, a.cfg.field.hidden);
  set("--center-bands", cfg.field.center_bands, a.cfg.field.center_bands);
  set("--time-bands", cfg.field.time_bands, a.cfg.field.time_bands);
  set("--checkpoint-every", cfg.checkpoint_every, a.cfg.checkpoint_every);
  if (given("--anneal")) cfg.anneal = parse_anneal_binding(a.anneal);
  if (a.freeze_static) cfg.freeze_static = true;
  if (a.no_kml || a.no_support) cfg.weights.kml = 0.0;
  if (a.no_scl || a.no_support) cfg.weights.scl = 0.0;
  if (given("--ref-stride") && a.ref_stride < 1) throw UsageError("--ref-stride must be at least 1");
  return cfg;
}

int cmd_train(const TrainArgs& a, const fs::path& workdir, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  Manifest m{"train", args};
  TrainConfig cfg = resolve_train(a, workdir);
  const fs::path scene = workdir / a.scene;
  const fs::path cloud_path = a.cloud.empty() ? scene / "cloud.ply" : workdir / a.cloud;
  const fs::path frames_path = a.frames.empty() ? scene / "frames" : workdir / a.frames;
  const fs::path tracks_path = a.tracks.empty() ? scene / "tracks.json" : workdir / a.tracks;
  const fs::path camera_path = a.camera.empty() ? scene / "camera.json" : workdir / a.camera;

  TrainInputs inputs{load_cloud(cloud_path), load_camera(camera_path), load_frames(frames_path),
                     load_tracks(tracks_path)};
  if (a.app->get_option("--ref-stride")->count() > 0) {
    cfg.supervised_frames.clear();
    if (a.ref_stride > 1)
      for (int f = 0; f < static_cast<int>(inputs.reference.size()); f += a.ref_stride) cfg.supervised_frames.push_back(f);
  }
  cfg.validate();
  if (!a.config_path.empty()) m.input(workdir / a.config_path, workdir);
  for (const fs::path& p : {cloud_path, frames_path, tracks_path, camera_path}) m.input(p, workdir);
  m.config = train_config_to_json(cfg);

  const fs::path dir = workdir / a.out;
  fs::create_directories(dir);
  write_text(dir / "config.json", train_config_to_json(cfg).dump(2) + "\n");
  std::ofstream log(dir / "loss.jsonl", std::ios::trunc);
  if (!log) throw DataError((dir / "loss.jsonl").string() + ": cannot open for writing");

  auto checkpoint = [&](const DeformField& field, const GaussianCloud& cloud) {
    save_archive({cloud, field, inputs.camera}, dir / "checkpoint");
  };
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& info) {
    const LossReport& r = info.report;
    log << loss_record_to_json({info.iteration, r.ref, r.kml, r.scl, r.total}).dump() << "\n" << std::flush;
  };
  hooks.on_checkpoint = [&](int, const DeformField& f, const GaussianCloud& c) { checkpoint(f, c); };

  TrainResult result;
  try {
    result = train(inputs, cfg, hooks);
  } catch (const NumericalError&) {
    err << "training diverged; " << (fs::exists(dir / "checkpoint") ? "last good checkpoint kept in " : "no checkpoint in ")
        << (dir / "checkpoint").string() << "\n";
    m.outputs.push_back("loss.jsonl");
    m.write(dir);
    throw;
  }
  checkpoint(result.field, result.cloud);
  for (const char* f : {"config.json", "loss.jsonl", "checkpoint"}) m.output(dir / f, workdir);
  m.write(dir);
  const LossRecord& first = result.history.front();
  const LossRecord& last = result.history.back();
  out << "trained " << cfg.iterations << " iterations: total loss " << first.total << " -> " << last.total << "\n";
  return kExitOk;
}

// render

struct RenderArgs {
  std::string checkpoint = "run/checkpoint";
  std::string out = "render";
  std::string camera;
  std::string timesteps_from;
  int frames = 16;
  int orbit = 0;
  double time = 0.0;
  CLI::App* app = nullptr;
};

void add_render(CLI::App& root, RenderArgs& a) {
  a.app = root.add_subcommand("render", "Render a checkpoint over time, or as an orbit sweep at one time");
  auto* r = a.app;
  r->add_option("--checkpoint", a.checkpoint, "Checkpoint directory")->capture_default_str();
  r->add_option("--out", a.out, "Output frame directory")->capture_default_str();
  r->add_option("--camera", a.camera, "Camera JSON (default: the checkpoint's reference camera)");
  r->add_option("--frames", a.frames, "Number of evenly spaced timesteps")->capture_default_str();
  r->add_option("--timesteps-from", a.timesteps_from, "Reuse the timesteps of this frame directory");
  r->add_option("--orbit", a.orbit, "Render this many azimuth views around the origin instead");
  r->add_option("--time", a.time, "Timestep of the orbit sweep")->capture_default_str();
}

int cmd_render(const RenderArgs& a, const fs::path& workdir, const std::vector<std::string>& args, std::ostream& out) {
  Manifest m{"render", args};
  const fs::path ckpt = workdir / a.checkpoint;
  const SceneArchive archive = load_archive(ckpt);
  m.input(ckpt, workdir);
  Camera cam = archive.camera;
  if (!a.camera.empty()) {
    cam = load_camera(workdir / a.camera);
    m.input(workdir / a.camera, workdir);
  }
  const fs::path dir = workdir / a.out;
  FrameSequence seq;
  if (a.orbit > 0) {
    if (!(a.time >= 0.0 && a.time <= 1.0)) throw UsageError("--time must lie in [0, 1]");
    const DeformPass pass = deform(archive.field, archive.cloud, a.time);
    const GaussianCloud state = pass.cloud.materialize();
    const double radius = (cam.position - cam.target).norm();
    for (int k = 0; k < a.orbit; ++k) {
      double azimuth = 360.0 * k / a.orbit;
      if (azimuth > 180.0) azimuth -= 360.0;
      Camera view = make_orbit_camera(azimuth, 0.0, radius, cam.image_height);
      view.image_width = cam.image_width;
      seq.frames.push_back(render(state, view).output.image);
    }
    seq.timesteps = linspace_timesteps(a.orbit);
    save_frames(seq, dir);
    m.config = {{"orbit", a.orbit}, {"time", a.time}};
  } else {
    if (!a.timesteps_from.empty()) {
      seq.timesteps = load_frames(workdir / a.timesteps_from).timesteps;
    } else {
      if (a.frames < 1) throw UsageError("--frames must be at least 1");
      seq.timesteps = linspace_timesteps(a.frames);
    }
    std::vector<KeypointProjection> projections;
    for (double t : seq.timesteps) {
      const DeformPass pass = deform(archive.field, archive.cloud, t);
      seq.frames.push_back(render(pass.cloud.materialize(), cam).output.image);
      projections.push_back(predict_keypoints(pass.cloud, cam));
    }
    save_frames(seq, dir);
    save_tracks(assemble_track(projections, cam, true), dir / "tracks.json");
    m.output(dir / "tracks.json", workdir);
    m.config = {{"timesteps", seq.timesteps}};
  }
  m.config["camera"] = camera_to_json(cam);
  m.output(dir, workdir);
  m.write(dir);
  out << "rendered " << seq.size() << " frames to " << dir.string() << "\n";
  return kExitOk;
}

// eval

struct EvalArgs {
  std::string rendered = "render";
  std::string reference = "scene/frames";
  std::string tracks, reference_tracks;
  std::string frames;
  int holdout_stride = 0;
  std::string json_out = "eval.json";
  std::string label = "run";
  CLI::App* app = nullptr;
};

void add_eval(CLI::App& root, EvalArgs& a) {
  a.app = root.add_subcommand("eval", "PSNR, SSIM and keypoint RMSE between two frame directories");
  auto* e = a.app;
  e->add_option("--rendered", a.rendered, "Rendered frame directory")->capture_default_str();
  e->add_option("--reference", a.reference, "Reference frame directory")->capture_default_str();
  e->add_option("--tracks", a.tracks, "Predicted keypoint tracks JSON");
  e->add_option("--reference-tracks", a.reference_tracks, "Reference keypoint tracks JSON");
  e->add_option("--frames", a.frames, "Comma-separated frame indices to evaluate (default: all)");
  e->add_option("--holdout-stride", a.holdout_stride, "Evaluate only frames not divisible by this stride");
  e->add_option("--json", a.json_out, "Where to write the report")->capture_default_str();
  e->add_option("--label", a.label, "Row label in the printed table")->capture_default_str();
}

int cmd_eval(const EvalArgs& a, const fs::path& workdir, std::ostream& out) {
  const FrameSequence rendered = load_frames(workdir / a.rendered);
  const FrameSequence reference = load_frames(workdir / a.reference);
  std::vector<int> frames = parse_int_list(a.frames);
  if (a.holdout_stride > 1) {
    if (!frames.empty()) throw UsageError("--frames and --holdout-stride are exclusive");
    for (int f = 0; f < static_cast<int>(reference.size()); ++f)
      if (f % a.holdout_stride != 0) frames.push_back(f);
  }
  if (a.tracks.empty() != a.reference_tracks.empty())
    throw UsageError("--tracks and --reference-tracks must be given together");
  std::optional<KeypointTrack> pred, ref;
  if (!a.tracks.empty()) {
    pred = load_tracks(workdir / a.tracks);
    ref = load_tracks(workdir / a.reference_tracks);
  }
  const EvalReport r = evaluate(rendered.frames, reference.frames, pred ? &*pred : nullptr, ref ? &*ref : nullptr, frames);
  write_text(workdir / a.json_out, report_to_json(r).dump(2) + "\n");
  out << format_report_table(r, a.label);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable Gaussian splatting with a time-conditioned deformation field", "splat4d"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string workdir = ".";
  app.add_option("--workdir", workdir, "Directory all relative paths resolve against")->capture_default_str();

  SynthArgs synth;
  TrainArgs train_args;
  RenderArgs render_args;
  EvalArgs eval_args;
  add_synth(app, synth);
  add_train(app, train_args);
  add_render(app, render_args);
  add_eval(app, eval_args);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << app.get_subcommands().front()->help();
    return kExitUsage;
  }

  const fs::path root(workdir);
  try {
    if (!fs::is_directory(root)) throw UsageError("--workdir " + workdir + " is not a directory");
    if (synth.app->parsed()) return cmd_synth(synth, root, args, out);
    if (train_args.app->parsed()) return cmd_train(train_args, root, args, out, err);
    if (render_args.app->parsed()) return cmd_render(render_args, root, args, out);
    return cmd_eval(eval_args, root, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace splat4d
