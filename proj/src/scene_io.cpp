// scene_io.cpp

#include "splat4d/scene_io.hpp"

#include "splat4d/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

namespace splat4d {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using json = nlohmann::json;

namespace {

constexpr const char* kPlyFields[] = {"x",       "y",       "z",       "rot_w",   "rot_x",   "rot_y",
                                      "rot_z",   "scale_x", "scale_y", "scale_z", "opacity", "red",
                                      "green",   "blue"};
constexpr int kPlyFieldCount = 14;
constexpr char kParamsMagic[8] = {'S', '4', 'D', 'P', 'A', 'R', 'M', '1'};

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_binary(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(path.string() + ": write failed");
}

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  template <typename T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > bytes_.size())
      throw DataError(name_ + ": byte " + std::to_string(pos_) + ": truncated while reading " + what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t offset() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::vector<double> gaussian_values(const Gaussian& g) {
  return {g.center.x(),   g.center.y(),   g.center.z(),   g.rotation[0], g.rotation[1], g.rotation[2],
          g.rotation[3],  g.scale.x(),    g.scale.y(),    g.scale.z(),   g.opacity,     g.color.x(),
          g.color.y(),    g.color.z()};
}

Gaussian gaussian_from(const double* v) {
  Gaussian g;
  g.center = Vec3(v[0], v[1], v[2]);
  g.rotation = Quat(v[3], v[4], v[5], v[6]);
  g.scale = Vec3(v[7], v[8], v[9]);
  g.opacity = v[10];
  g.color = Vec3(v[11], v[12], v[13]);
  return g;
}

std::string join_anchors(const std::vector<int>& anchors) {
  std::string s;
  for (std::size_t i = 0; i < anchors.size(); ++i) s += (i ? "," : "") + std::to_string(anchors[i]);
  return s;
}

std::vector<int> parse_anchors(const std::string& text, const std::string& where) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw DataError(where + ": bad anchor index '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Range checks with the field name, before the generic cloud validation.
void check_field(double v, int field, std::size_t vertex, const std::string& where) {
  const std::string name = kPlyFields[field];
  if (!std::isfinite(v))
    throw DataError(where + ": vertex " + std::to_string(vertex) + ": field " + name + " is not finite");
  const bool bad = (field >= 7 && field <= 9 && !(v > 0.0)) || (field == 10 && (v < 0.0 || v > 1.0)) ||
                   (field >= 11 && (v < 0.0 || v > 1.0));
  if (bad)
    throw DataError(where + ": vertex " + std::to_string(vertex) + ": field " + name + " out of range (" +
                    std::to_string(v) + ")");
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const char* key) {
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw DataError(std::string("camera field ") + key + " must be a 3-vector");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

}  // namespace

std::string read_text(const fs::path& path) { return read_binary(path); }
void write_text(const fs::path& path, const std::string& text) { write_binary(path, text); }

// PLY

void save_cloud(const GaussianCloud& cloud, const fs::path& path) {
  cloud.validate();
  std::string out = "ply\nformat binary_little_endian 1.0\ncomment anchors " + join_anchors(cloud.anchors) +
                    "\nelement vertex " + std::to_string(cloud.size()) + "\n";
  for (const char* f : kPlyFields) out += std::string("property float ") + f + "\n";
  out += "end_header\n";
  for (const Gaussian& g : cloud.gaussians)
    for (double v : gaussian_values(g)) put(out, static_cast<float>(v));
  write_binary(path, out);
}

GaussianCloud load_cloud(const fs::path& path) {
  const std::string bytes = read_binary(path);
  const std::string where = path.filename().string();
  auto fail = [&](std::size_t offset, const std::string& msg) -> DataError {
    return DataError(where + ": byte " + std::to_string(offset) + ": " + msg);
  };

  std::size_t pos = 0;
  auto next_line = [&]() -> std::pair<std::size_t, std::string> {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw fail(pos, "header ends before end_header");
    std::pair<std::size_t, std::string> r{pos, bytes.substr(pos, nl - pos)};
    pos = nl + 1;
    if (!r.second.empty() && r.second.back() == '\r') r.second.pop_back();
    return r;
  };

  if (next_line().second != "ply") throw fail(0, "missing 'ply' magic");
  GaussianCloud cloud;
  long long count = -1;
  std::vector<std::string> props;
  bool format_ok = false;
  for (;;) {
    const auto [offset, line] = next_line();
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt != "binary_little_endian" || ver != "1.0")
        throw fail(offset, "unsupported format '" + fmt + " " + ver + "'");
      format_ok = true;
    } else if (key == "comment") {
      std::string word;
      ls >> word;
      if (word == "anchors") {
        std::string rest;
        std::getline(ls, rest);
        rest.erase(0, rest.find_first_not_of(' '));
        cloud.anchors = parse_anchors(rest, where + ": byte " + std::to_string(offset));
      }
    } else if (key == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex" || !ls || count < 0) throw fail(offset, "expected 'element vertex <count>'");
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw fail(offset, "property " + name + " must be float, got " + type);
      props.push_back(name);
    } else if (!key.empty()) {
      throw fail(offset, "unexpected header line '" + line + "'");
    }
  }
  if (!format_ok) throw fail(0, "missing format line");
  if (count < 0) throw fail(0, "missing vertex element");
  if (props.size() != static_cast<std::size_t>(kPlyFieldCount) ||
      !std::equal(props.begin(), props.end(), std::begin(kPlyFields)))
    throw fail(0, "vertex properties must be x y z rot_w rot_x rot_y rot_z scale_x scale_y scale_z opacity red green blue");

  const std::size_t need = static_cast<std::size_t>(count) * kPlyFieldCount * sizeof(float);
  if (bytes.size() - pos < need)
    throw fail(bytes.size(), "truncated payload: expected " + std::to_string(need) + " bytes of vertex data, found " +
                                 std::to_string(bytes.size() - pos));
  if (bytes.size() - pos > need) throw fail(pos + need, "trailing bytes after vertex data");

  Reader r(bytes, where);
  r.seek(pos);
  double values[kPlyFieldCount];
  for (long long i = 0; i < count; ++i) {
    for (int f = 0; f < kPlyFieldCount; ++f) {
      const std::size_t at = r.offset();
      values[f] = r.get<float>(kPlyFields[f]);
      try {
        check_field(values[f], f, static_cast<std::size_t>(i), where);
      } catch (const DataError& e) {
        throw fail(at, e.what());
      }
    }
    cloud.gaussians.push_back(gaussian_from(values));
  }
  cloud.validate();
  return cloud;
}

// PNG

void save_png(const Image& image, const fs::path& path) {
  if (image.width <= 0 || image.height <= 0) throw UsageError("cannot write an empty image");
  std::vector<png_byte> pixels(image.data.size());
  for (std::size_t k = 0; k < pixels.size(); ++k)
    pixels[k] = static_cast<png_byte>(std::lround(std::clamp(image.data[k], 0.0, 1.0) * 255.0));
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, pixels.data(), 0, nullptr))
    throw DataError(path.string() + ": " + img.message);
}

Image load_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw DataError(path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError(path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = pixels[k] / 255.0;
  return out;
}

void save_frames(const FrameSequence& seq, const fs::path& dir) {
  seq.validate();
  fs::create_directories(dir);
  char name[32];
  for (std::size_t f = 0; f < seq.size(); ++f) {
    std::snprintf(name, sizeof name, "frame_%04zu.png", f);
    save_png(seq.frames[f], dir / name);
  }
  write_text(dir / "timesteps.json", json(seq.timesteps).dump() + "\n");
}

FrameSequence load_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  static const std::regex pattern(R"(frame_(\d{4,})\.png)");
  std::vector<std::pair<int, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoi(m[1].str()), entry.path());
  }
  std::sort(found.begin(), found.end());
  if (found.empty()) throw DataError(dir.string() + ": no frame_NNNN.png files");
  FrameSequence seq;
  for (std::size_t f = 0; f < found.size(); ++f) {
    if (found[f].first != static_cast<int>(f)) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.png", f);
      throw DataError(dir.string() + ": missing " + name);
    }
    seq.frames.push_back(load_png(found[f].second));
    if (!seq.frames.back().same_shape(seq.frames.front()))
      throw DataError(found[f].second.string() + ": size differs from frame_0000.png");
  }
  const fs::path ts = dir / "timesteps.json";
  if (fs::exists(ts)) {
    try {
      seq.timesteps = json::parse(read_text(ts)).get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError(ts.string() + ": " + e.what());
    }
  } else {
    seq.timesteps = linspace_timesteps(static_cast<int>(seq.frames.size()));
  }
  seq.validate();
  return seq;
}

// Tracks

json tracks_to_json(const KeypointTrack& track) {
  json j;
  j["n"] = track.n;
  j["t"] = track.t;
  j["image_size"] = {track.image_width, track.image_height};
  j["support"] = json::array();
  for (const Vec2& p : track.support) j["support"].push_back({p.x(), p.y()});
  j["points"] = json::array();
  j["visibility"] = json::array();
  for (int f = 0; f < track.t; ++f) {
    json pts = json::array(), vis = json::array();
    for (int i = 0; i < track.n; ++i) {
      pts.push_back({track.point(f, i).x(), track.point(f, i).y()});
      vis.push_back(track.is_visible(f, i));
    }
    j["points"].push_back(std::move(pts));
    j["visibility"].push_back(std::move(vis));
  }
  return j;
}

KeypointTrack tracks_from_json(const json& j) {
  try {
    const int n = j.at("n").get<int>(), t = j.at("t").get<int>();
    const json& size = j.at("image_size");
    if (!size.is_array() || size.size() != 2) throw DataError("tracks: image_size must be [width, height]");
    if (n < 0 || t < 0) throw DataError("tracks: n and t must be non-negative");
    KeypointTrack track(n, t, size[0].get<int>(), size[1].get<int>());
    auto point = [](const json& p, const std::string& where) {
      if (!p.is_array() || p.size() != 2) throw DataError(where + ": points must be [x, y]");
      return Vec2(p[0].get<double>(), p[1].get<double>());
    };
    const json& support = j.at("support");
    if (support.size() != static_cast<std::size_t>(n))
      throw DataError("tracks: support has " + std::to_string(support.size()) + " points, expected " + std::to_string(n));
    for (int i = 0; i < n; ++i) track.support[i] = point(support[i], "tracks: support");
    const json& points = j.at("points");
    const json& vis = j.at("visibility");
    if (points.size() != static_cast<std::size_t>(t) || vis.size() != static_cast<std::size_t>(t))
      throw DataError("tracks: expected " + std::to_string(t) + " frames of points and visibility");
    for (int f = 0; f < t; ++f) {
      const std::string where = "tracks: frame " + std::to_string(f);
      if (points[f].size() != static_cast<std::size_t>(n) || vis[f].size() != static_cast<std::size_t>(n))
        throw DataError(where + ": expected " + std::to_string(n) + " points");
      for (int i = 0; i < n; ++i) {
        track.point(f, i) = point(points[f][i], where);
        track.set_visible(f, i, vis[f][i].get<bool>());
      }
    }
    track.validate();
    return track;
  } catch (const json::exception& e) {
    throw DataError(std::string("tracks: ") + e.what());
  }
}

void save_tracks(const KeypointTrack& track, const fs::path& path) {
  track.validate();
  write_text(path, tracks_to_json(track).dump(1) + "\n");
}

KeypointTrack load_tracks(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return tracks_from_json(j);
}

// Camera

json camera_to_json(const Camera& cam) {
  return {{"position", vec_json(cam.position)},
          {"target", vec_json(cam.target)},
          {"up", vec_json(cam.up)},
          {"vertical_fov", cam.vertical_fov},
          {"image_width", cam.image_width},
          {"image_height", cam.image_height},
          {"near", cam.near},
          {"far", cam.far}};
}

Camera camera_from_json(const json& j) {
  try {
    Camera cam;
    cam.position = vec_from(j, "position");
    cam.target = vec_from(j, "target");
    cam.up = vec_from(j, "up");
    cam.vertical_fov = j.at("vertical_fov").get<double>();
    cam.image_width = j.at("image_width").get<int>();
    cam.image_height = j.at("image_height").get<int>();
    cam.near = j.value("near", cam.near);
    cam.far = j.value("far", cam.far);
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw DataError(std::string("camera: ") + e.what());
  }
}

void save_camera(const Camera& cam, const fs::path& path) { write_text(path, camera_to_json(cam).dump(2) + "\n"); }

Camera load_camera(const fs::path& path) {
  try {
    return camera_from_json(json::parse(read_text(path)));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Archive

void save_archive(const SceneArchive& archive, const fs::path& dir) {
  archive.cloud.validate();
  fs::create_directories(dir);
  save_cloud(archive.cloud, dir / "cloud.ply");
  save_camera(archive.camera, dir / "camera.json");

  std::string bin(kParamsMagic, sizeof kParamsMagic);
  put<std::uint64_t>(bin, archive.cloud.size());
  for (const Gaussian& g : archive.cloud.gaussians)
    for (double v : gaussian_values(g)) put(bin, v);
  put<std::uint64_t>(bin, archive.cloud.anchors.size());
  for (int a : archive.cloud.anchors) put<std::int32_t>(bin, a);
  const DeformFieldConfig& fc = archive.field.config();
  put<std::int32_t>(bin, fc.hidden);
  put<std::int32_t>(bin, fc.center_bands);
  put<std::int32_t>(bin, fc.time_bands);
  put<std::uint64_t>(bin, archive.field.parameter_count());
  for (double v : archive.field.parameters()) put(bin, v);
  write_binary(dir / "params.bin", bin);

  const json manifest = {{"format", kArchiveFormat},
                         {"version", kArchiveVersion},
                         {"gaussians", archive.cloud.size()},
                         {"anchors", archive.cloud.anchors.size()},
                         {"field", {{"hidden", fc.hidden}, {"center_bands", fc.center_bands}, {"time_bands", fc.time_bands}}},
                         {"files", {{"cloud", "cloud.ply"}, {"params", "params.bin"}, {"camera", "camera.json"}}}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

SceneArchive load_archive(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
    if (manifest.at("format").get<std::string>() != kArchiveFormat)
      throw DataError((dir / "manifest.json").string() + ": not a " + kArchiveFormat + " manifest");
    const int version = manifest.at("version").get<int>();
    if (version != kArchiveVersion)
      throw DataError((dir / "manifest.json").string() + ": unsupported archive version " + std::to_string(version) +
                      " (expected " + std::to_string(kArchiveVersion) + ")");
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }

  const std::string bytes = read_binary(dir / "params.bin");
  Reader r(bytes, "params.bin");
  char magic[sizeof kParamsMagic];
  for (char& c : magic) c = r.get<char>("magic");
  if (std::memcmp(magic, kParamsMagic, sizeof magic) != 0) throw DataError("params.bin: byte 0: bad magic");

  SceneArchive a;
  const auto m = r.get<std::uint64_t>("gaussian count");
  if (m > bytes.size()) throw DataError("params.bin: byte 8: implausible gaussian count");
  double values[kPlyFieldCount];
  for (std::uint64_t i = 0; i < m; ++i) {
    for (double& v : values) v = r.get<double>("gaussian");
    a.cloud.gaussians.push_back(gaussian_from(values));
  }
  const auto n = r.get<std::uint64_t>("anchor count");
  if (n > bytes.size()) throw DataError("params.bin: implausible anchor count");
  for (std::uint64_t i = 0; i < n; ++i) a.cloud.anchors.push_back(r.get<std::int32_t>("anchor"));
  DeformFieldConfig fc;
  fc.hidden = r.get<std::int32_t>("hidden width");
  fc.center_bands = r.get<std::int32_t>("center bands");
  fc.time_bands = r.get<std::int32_t>("time bands");
  a.field = DeformField(fc);
  const std::size_t at = r.offset();
  const auto count = r.get<std::uint64_t>("parameter count");
  if (count != a.field.parameter_count())
    throw DataError("params.bin: byte " + std::to_string(at) + ": field has " + std::to_string(count) +
                    " parameters, architecture needs " + std::to_string(a.field.parameter_count()));
  for (double& v : a.field.parameters()) v = r.get<double>("field parameter");
  if (!r.at_end()) throw DataError("params.bin: byte " + std::to_string(r.offset()) + ": trailing bytes");
  a.cloud.validate();
  if (manifest.value("gaussians", a.cloud.size()) != a.cloud.size())
    throw DataError("manifest gaussian count disagrees with params.bin");

  const GaussianCloud ply = load_cloud(dir / "cloud.ply");
  if (ply.size() != a.cloud.size() || ply.anchors != a.cloud.anchors)
    throw DataError((dir / "cloud.ply").string() + ": disagrees with params.bin");
  a.camera = load_camera(dir / "camera.json");
  return a;
}

}  // namespace splat4d

// Configs and logs

namespace splat4d {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": expected an object");
  for (const auto& [k, _] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* known) { return k == known; }))
      throw DataError(where + ": unknown key '" + k + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json train_config_to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"lr",
           {{"mlp", c.lr.mlp},
            {"centers", c.lr.centers},
            {"rotations", c.lr.rotations},
            {"scales", c.lr.scales},
            {"opacity", c.lr.opacity},
            {"color", c.lr.color}}},
          {"t_max_start", c.t_max_start},
          {"t_max_end", c.t_max_end},
          {"anneal", to_string(c.anneal)},
          {"weights", {{"ref", c.weights.ref}, {"kml", c.weights.kml}, {"scl", c.weights.scl}}},
          {"seed", c.seed},
          {"freeze_static", c.freeze_static},
          {"field", {{"hidden", c.field.hidden}, {"center_bands", c.field.center_bands}, {"time_bands", c.field.time_bands}}},
          {"checkpoint_every", c.checkpoint_every},
          {"supervised_frames", c.supervised_frames}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    reject_unknown(j,
                   {"iterations", "batch_size", "lr", "t_max_start", "t_max_end", "anneal", "weights", "seed",
                    "freeze_static", "field", "checkpoint_every", "supervised_frames"},
                   "train config");
    read_opt(j, "iterations", c.iterations);
    read_opt(j, "batch_size", c.batch_size);
    if (j.contains("lr")) {
      const json& lr = j.at("lr");
      reject_unknown(lr, {"mlp", "centers", "rotations", "scales", "opacity", "color"}, "train config lr");
      read_opt(lr, "mlp", c.lr.mlp);
      read_opt(lr, "centers", c.lr.centers);
      read_opt(lr, "rotations", c.lr.rotations);
      read_opt(lr, "scales", c.lr.scales);
      read_opt(lr, "opacity", c.lr.opacity);
      read_opt(lr, "color", c.lr.color);
    }
    read_opt(j, "t_max_start", c.t_max_start);
    read_opt(j, "t_max_end", c.t_max_end);
    if (j.contains("anneal")) c.anneal = parse_anneal_binding(j.at("anneal").get<std::string>());
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      reject_unknown(w, {"ref", "kml", "scl"}, "train config weights");
      read_opt(w, "ref", c.weights.ref);
      read_opt(w, "kml", c.weights.kml);
      read_opt(w, "scl", c.weights.scl);
    }
    read_opt(j, "seed", c.seed);
    read_opt(j, "freeze_static", c.freeze_static);
    if (j.contains("field")) {
      const json& f = j.at("field");
      reject_unknown(f, {"hidden", "center_bands", "time_bands"}, "train config field");
      read_opt(f, "hidden", c.field.hidden);
      read_opt(f, "center_bands", c.field.center_bands);
      read_opt(f, "time_bands", c.field.time_bands);
    }
    read_opt(j, "checkpoint_every", c.checkpoint_every);
    read_opt(j, "supervised_frames", c.supervised_frames);
  } catch (const json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  return c;
}

json synth_config_to_json(const SynthConfig& c) {
  return {{"kind", to_string(c.kind)},       {"gaussians", c.gaussians},
          {"keypoints", c.keypoints},        {"frames", c.frames},
          {"image_size", c.image_size},      {"radius", c.radius},
          {"amplitude", c.amplitude},        {"camera_radius", c.camera_radius},
          {"camera_azimuth", c.camera_azimuth}, {"camera_elevation", c.camera_elevation},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
  try {
    reject_unknown(j,
                   {"kind", "gaussians", "keypoints", "frames", "image_size", "radius", "amplitude", "camera_radius",
                    "camera_azimuth", "camera_elevation", "seed"},
                   "synth config");
    if (j.contains("kind")) c.kind = parse_motion_kind(j.at("kind").get<std::string>());
    read_opt(j, "gaussians", c.gaussians);
    read_opt(j, "keypoints", c.keypoints);
    read_opt(j, "frames", c.frames);
    read_opt(j, "image_size", c.image_size);
    read_opt(j, "radius", c.radius);
    read_opt(j, "amplitude", c.amplitude);
    read_opt(j, "camera_radius", c.camera_radius);
    read_opt(j, "camera_azimuth", c.camera_azimuth);
    read_opt(j, "camera_elevation", c.camera_elevation);
    read_opt(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw DataError(std::string("synth config: ") + e.what());
  }
  return c;
}

json loss_record_to_json(const LossRecord& r) {
  return {{"iteration", r.iteration}, {"ref", r.ref}, {"kml", r.kml}, {"scl", r.scl}, {"total", r.total}};
}

LossRecord loss_record_from_json(const json& j) {
  try {
    return {j.at("iteration").get<int>(), j.at("ref").get<double>(), j.at("kml").get<double>(),
            j.at("scl").get<double>(), j.at("total").get<double>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("loss record: ") + e.what());
  }
}

std::vector<LossRecord> load_loss_log(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<LossRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(loss_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace splat4d
