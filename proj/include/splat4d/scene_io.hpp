// scene_io.hpp
//
// Files in and out: PLY clouds, PNG frame directories, JSON tracks/cameras,
// versioned checkpoint archives, and the synthetic motion oracle.

#pragma once

#include "splat4d/deformation.hpp"
#include "splat4d/optimizer.hpp"
#include "splat4d/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace splat4d {

namespace fs = std::filesystem;

inline constexpr const char* kArchiveFormat = "splat4d-archive";
inline constexpr int kArchiveVersion = 1;

void save_cloud(const GaussianCloud& cloud, const fs::path& path);
GaussianCloud load_cloud(const fs::path& path);

/// frame_0000.png, frame_0001.png, ... plus timesteps.json.
void save_frames(const FrameSequence& seq, const fs::path& dir);
/// Timesteps come from timesteps.json when present, else evenly spaced over [0, 1].
FrameSequence load_frames(const fs::path& dir);

void save_png(const Image& image, const fs::path& path);
Image load_png(const fs::path& path);

nlohmann::json tracks_to_json(const KeypointTrack& track);
KeypointTrack tracks_from_json(const nlohmann::json& j);
void save_tracks(const KeypointTrack& track, const fs::path& path);
KeypointTrack load_tracks(const fs::path& path);

nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);
void save_camera(const Camera& cam, const fs::path& path);
Camera load_camera(const fs::path& path);

struct SceneArchive {
  GaussianCloud cloud;
  DeformField field;
  Camera camera;

  bool operator==(const SceneArchive&) const = default;
};

/// Directory with manifest.json, cloud.ply, params.bin and camera.json.
/// params.bin carries the exact doubles, so loading is bit-exact even where the
/// float32 PLY is not.
void save_archive(const SceneArchive& archive, const fs::path& dir);
SceneArchive load_archive(const fs::path& dir);

/// Every key is optional; missing keys keep the values already in `base`.
/// Unknown keys are rejected.
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json loss_record_to_json(const LossRecord& r);
LossRecord loss_record_from_json(const nlohmann::json& j);
std::vector<LossRecord> load_loss_log(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

// Synthetic oracle.

enum class MotionKind { rigid_rotation, sinusoidal_articulation, translation };

std::string to_string(MotionKind k);
MotionKind parse_motion_kind(const std::string& s);

struct SynthConfig {
  MotionKind kind = MotionKind::rigid_rotation;
  int gaussians = 512;
  int keypoints = 14;
  int frames = 16;
  int image_size = 128;
  double radius = 2.0;
  /// Degrees for the rotational kinds, world units for translation.
  double amplitude = 30.0;
  double camera_radius = 6.0;
  double camera_azimuth = 0.0;    // degrees
  double camera_elevation = 0.0;  // degrees
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthScene {
  GaussianCloud cloud;                 // canonical cloud with anchors
  Camera camera;                       // reference viewpoint
  std::vector<GaussianCloud> states;   // ground-truth deformed cloud per frame
  FrameSequence frames;
  KeypointTrack tracks;
};

/// Ground-truth deformed cloud at normalized time tau.
GaussianCloud apply_motion(const SynthConfig& cfg, const GaussianCloud& cloud, double tau);

SynthScene synth_scene(const SynthConfig& cfg);

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

}  // namespace splat4d
