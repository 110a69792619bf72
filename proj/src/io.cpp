#include "dtcalib/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dtcalib/errors.hpp"

namespace dtcalib {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(what + ": invalid JSON: " + e.what());
  }
}

template <typename E, typename Fn>
auto rethrow_json_errors(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw E(what + ": " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

double get_number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing '" + key + "' in " + where);
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError("'" + key + "' in " + where + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError("'" + key + "' in " + where + " must be finite");
  return d;
}

double get_number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  return j.contains(key) ? get_number(j, key, where) : fallback;
}

int get_int_or(const json& j, const std::string& key, int fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError("'" + key + "' in " + where + " must be an integer");
  return v.get<int>();
}

Vec3 vec3_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw ConfigError(what + " must be an array of 3 numbers");
    v(i) = j[static_cast<std::size_t>(i)].get<double>();
  }
  if (!v.allFinite()) throw ConfigError(what + " must be finite");
  return v;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Pose pose_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(what + " must be a 4x4 row-major matrix");
  Eigen::Matrix4d T;
  for (std::size_t r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw ConfigError(what + " must be a 4x4 row-major matrix");
    for (std::size_t c = 0; c < 4; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(what + " must contain numbers only");
      T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  try {
    return Pose::FromMatrix(T);
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

json pose_to_json(const Pose& T) {
  const Eigen::Matrix4d M = T.matrix();
  json rows = json::array();
  for (int r = 0; r < 4; ++r) rows.push_back(json::array({M(r, 0), M(r, 1), M(r, 2), M(r, 3)}));
  return rows;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

BoardConfig board_from_json(const json& j) {
  const std::string where = "board";
  check_keys(j, {"rows", "cols", "tag_size", "tag_spacing"}, where);
  BoardConfig b;
  b.rows = get_int_or(j, "rows", b.rows, where);
  b.cols = get_int_or(j, "cols", b.cols, where);
  b.tag_size = get_number_or(j, "tag_size", b.tag_size, where);
  b.tag_spacing = get_number_or(j, "tag_spacing", b.tag_spacing, where);
  b.build();
  return b;
}

json board_to_json(const BoardConfig& b) {
  return {{"rows", b.rows}, {"cols", b.cols}, {"tag_size", b.tag_size}, {"tag_spacing", b.tag_spacing}};
}

CameraModel camera_from_json(const json& j, int index) {
  const std::string where = "cameras[" + std::to_string(index) + "]";
  check_keys(j, {"fx", "fy", "cx", "cy", "distortion", "width", "height"}, where);
  CameraModel c;
  c.camera_index = index;
  c.fx = get_number(j, "fx", where);
  c.fy = get_number(j, "fy", where);
  c.cx = get_number(j, "cx", where);
  c.cy = get_number(j, "cy", where);
  if (j.contains("distortion")) {
    const auto& d = j.at("distortion");
    if (!d.is_array() || d.size() != 4) throw ConfigError(where + ".distortion must be [k1, k2, p1, p2]");
    for (std::size_t k = 0; k < 4; ++k) {
      if (!d[k].is_number()) throw ConfigError(where + ".distortion must contain numbers");
      c.distortion[k] = d[k].get<double>();
    }
  }
  c.width = get_int_or(j, "width", 0, where);
  c.height = get_int_or(j, "height", 0, where);
  return c;
}

json camera_to_json(const CameraModel& c) {
  json j = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
            {"distortion", json::array({c.distortion[0], c.distortion[1], c.distortion[2], c.distortion[3]})}};
  if (c.has_bounds()) {
    j["width"] = c.width;
    j["height"] = c.height;
  }
  return j;
}

std::vector<CameraModel> cameras_from_json(const json& j) {
  if (!j.is_array() || j.empty() || j.size() > 2) throw ConfigError("'cameras' must list one or two cameras");
  std::vector<CameraModel> out;
  for (std::size_t n = 0; n < j.size(); ++n) out.push_back(camera_from_json(j[n], static_cast<int>(n)));
  return out;
}

double median_period(const ImuStream& imu) {
  std::vector<double> d;
  for (std::size_t k = 0; k + 1 < imu.samples.size(); ++k) d.push_back(imu.samples[k + 1].t - imu.samples[k].t);
  if (d.empty()) throw ConfigError("IMU stream needs at least two samples to convert noise densities");
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// IMU CSV

ImuStream parse_imu_csv(std::istream& in) {
  ImuStream out;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    if (!header_seen) {
      if (row != kImuCsvHeader) {
        throw ParseError("expected header '" + std::string(kImuCsvHeader) + "'", line_no);
      }
      header_seen = true;
      continue;
    }
    std::array<std::string_view, 7> fields;
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = row.find(',', start);
      if (count == fields.size()) throw ParseError("expected 7 fields", line_no);
      fields[count++] = row.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (count != fields.size()) throw ParseError("expected 7 fields, got " + std::to_string(count), line_no);

    std::int64_t t_ns = 0;
    if (!parse_number(fields[0], t_ns)) throw ParseError("t_ns must be an integer", line_no);
    ImuSample s;
    std::array<double, 6> v{};
    for (std::size_t k = 0; k < 6; ++k) {
      if (!parse_number(fields[k + 1], v[k]) || !std::isfinite(v[k])) {
        throw ParseError("field " + std::to_string(k + 2) + " is not a finite number", line_no);
      }
    }
    s.gyro = Vec3(v[0], v[1], v[2]);
    s.accel = Vec3(v[3], v[4], v[5]);
    if (!out.t_ns.empty()) {
      if (t_ns == out.t_ns.back()) {
        throw FormatError("duplicate IMU timestamp " + std::to_string(t_ns) + " at line " + std::to_string(line_no));
      }
      if (t_ns < out.t_ns.back()) {
        throw FormatError("IMU timestamps out of order at line " + std::to_string(line_no));
      }
    }
    out.t_ns.push_back(t_ns);
    out.samples.push_back(s);
  }
  if (!header_seen) throw ParseError("empty IMU file", std::max(line_no, 1));
  if (out.samples.empty()) throw ParseError("IMU file has no samples", line_no);
  out.epoch_ns = out.t_ns.front();
  for (std::size_t k = 0; k < out.samples.size(); ++k) out.samples[k].t = ns_to_seconds(out.t_ns[k], out.epoch_ns);
  return out;
}

ImuStream load_imu_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open IMU file '" + path.string() + "'");
  return parse_imu_csv(in);
}

void write_imu_csv(const fs::path& path, const ImuStream& imu) {
  if (imu.t_ns.size() != imu.samples.size()) throw InvalidArgument("IMU stamps and samples differ in length");
  std::string text = std::string(kImuCsvHeader) + "\n";
  char buf[256];
  for (std::size_t k = 0; k < imu.samples.size(); ++k) {
    const auto& s = imu.samples[k];
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(imu.t_ns[k]), s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(),
                  s.accel.y(), s.accel.z());
    text += buf;
  }
  write_text_file(path, text);
}

// ---------------------------------------------------------------------------
// Detections

std::vector<FrameDetections> parse_detections(const std::string& text, const BoardGeometry& board, int num_cameras,
                                              std::int64_t epoch_ns) {
  return rethrow_json_errors<FormatError>("detections", [&] {
    const json root = parse_json(text, "detections");
    if (!root.is_object() || !root.contains("frames") || !root.at("frames").is_array()) {
      throw FormatError("detections: expected an object with a 'frames' array");
    }
    std::map<std::int64_t, FrameDetections> by_time;
    std::set<std::tuple<std::int64_t, int, int>> seen;
    std::size_t index = 0;
    for (const auto& rec : root.at("frames")) {
      const std::string where = "detections frames[" + std::to_string(index++) + "]";
      if (!rec.is_object() || !rec.contains("t_ns") || !rec.contains("cam") || !rec.contains("corners")) {
        throw FormatError(where + ": expected {t_ns, cam, corners}");
      }
      if (!rec.at("t_ns").is_number_integer() || !rec.at("cam").is_number_integer() ||
          !rec.at("corners").is_array()) {
        throw FormatError(where + ": t_ns and cam must be integers and corners an array");
      }
      const auto t_ns = rec.at("t_ns").get<std::int64_t>();
      const int cam = rec.at("cam").get<int>();
      if (cam < 0 || cam >= num_cameras) {
        throw ValidationError(where + ": camera index " + std::to_string(cam) + " is not configured");
      }
      auto& frame = by_time[t_ns];
      frame.t_ns = t_ns;
      frame.t = ns_to_seconds(t_ns, epoch_ns);
      for (const auto& c : rec.at("corners")) {
        if (!c.is_object() || !c.contains("id") || !c.contains("u") || !c.contains("v") ||
            !c.at("id").is_number_integer() || !c.at("u").is_number() || !c.at("v").is_number()) {
          throw FormatError(where + ": corners must be {id: int, u: number, v: number}");
        }
        const int id = c.at("id").get<int>();
        if (!board.has_corner(id)) {
          throw ValidationError(where + ": corner id " + std::to_string(id) + " does not exist on the board");
        }
        if (!seen.insert({t_ns, cam, id}).second) {
          throw ValidationError(where + ": duplicate corner " + std::to_string(id) + " for camera " +
                                std::to_string(cam) + " at t_ns " + std::to_string(t_ns));
        }
        const Vec2 px(c.at("u").get<double>(), c.at("v").get<double>());
        if (!px.allFinite()) throw ValidationError(where + ": non-finite pixel coordinates");
        frame.cameras[static_cast<std::size_t>(cam)].push_back({id, px});
      }
    }
    std::vector<FrameDetections> out;
    out.reserve(by_time.size());
    for (auto& [t, f] : by_time) out.push_back(std::move(f));
    return out;
  });
}

std::vector<FrameDetections> load_detections(const fs::path& path, const BoardGeometry& board, int num_cameras,
                                             std::int64_t epoch_ns) {
  return parse_detections(read_text_file(path), board, num_cameras, epoch_ns);
}

void write_detections(const fs::path& path, const std::vector<FrameDetections>& frames, int num_cameras) {
  json records = json::array();
  for (const auto& f : frames) {
    for (int n = 0; n < num_cameras; ++n) {
      const auto& corners = f.cameras[static_cast<std::size_t>(n)];
      if (corners.empty()) continue;
      json cs = json::array();
      for (const auto& c : corners) cs.push_back({{"id", c.id}, {"u", c.pixel.x()}, {"v", c.pixel.y()}});
      records.push_back({{"t_ns", f.t_ns}, {"cam", n}, {"corners", std::move(cs)}});
    }
  }
  write_text_file(path, json{{"frames", std::move(records)}}.dump() + "\n");
}

// ---------------------------------------------------------------------------
// Ground truth

GroundTruth load_truth(const fs::path& path) {
  return rethrow_json_errors<ConfigError>("truth", [&] {
    const json j = parse_json(read_text_file(path), path.string());
    const std::string where = "truth";
    check_keys(j, {"T_IC0", "T_IC1", "num_cameras", "time_offset_s", "b_gyro", "b_accel", "gravity"}, where);
    GroundTruth t;
    t.num_cameras = get_int_or(j, "num_cameras", 2, where);
    if (t.num_cameras < 1 || t.num_cameras > 2) throw ConfigError("truth: num_cameras must be 1 or 2");
    if (!j.contains("T_IC0")) throw ConfigError("truth: missing T_IC0");
    t.T_IC[0] = pose_from_json(j.at("T_IC0"), "truth.T_IC0");
    if (t.num_cameras == 2) {
      if (!j.contains("T_IC1")) throw ConfigError("truth: missing T_IC1");
      t.T_IC[1] = pose_from_json(j.at("T_IC1"), "truth.T_IC1");
    }
    t.time_offset = get_number(j, "time_offset_s", where);
    if (j.contains("b_gyro")) t.b_gyro = vec3_from_json(j.at("b_gyro"), "truth.b_gyro");
    if (j.contains("b_accel")) t.b_accel = vec3_from_json(j.at("b_accel"), "truth.b_accel");
    if (j.contains("gravity")) t.gravity = vec3_from_json(j.at("gravity"), "truth.gravity");
    return t;
  });
}

void write_truth(const fs::path& path, const GroundTruth& t) {
  json j = {{"num_cameras", t.num_cameras},
            {"T_IC0", pose_to_json(t.T_IC[0])},
            {"time_offset_s", t.time_offset},
            {"b_gyro", vec3_to_json(t.b_gyro)},
            {"b_accel", vec3_to_json(t.b_accel)},
            {"gravity", vec3_to_json(t.gravity)}};
  if (t.num_cameras == 2) j["T_IC1"] = pose_to_json(t.T_IC[1]);
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Run configuration

ImuNoiseModel RunConfig::noise_model(const ImuStream& imu) const {
  ImuNoiseModel m;
  if (gyro_sigma && accel_sigma) {
    m.sigma_gyro = *gyro_sigma;
    m.sigma_accel = *accel_sigma;
    m.validate();
    return m;
  }
  if (gyro_noise_density && accel_noise_density) {
    return ImuNoiseModel::FromDensities(*gyro_noise_density, *accel_noise_density, median_period(imu));
  }
  throw ConfigError("noise block needs gyro/accel noise densities or per-sample sigmas");
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir, bool check_files) {
  return rethrow_json_errors<ConfigError>("run config", [&] {
    const json j = parse_json(text, "run config");
    check_keys(j,
               {"imu", "detections", "output_dir", "board", "cameras", "noise", "solver", "gravity_norm",
                "cam_rate_decimate", "initial_guess"},
               "run config");
    RunConfig c;
    for (const char* key : {"imu", "detections"}) {
      if (!j.contains(key) || !j.at(key).is_string()) throw ConfigError(std::string("run config needs '") + key + "'");
    }
    c.imu_path = resolve(base_dir, j.at("imu").get<std::string>());
    c.detections_path = resolve(base_dir, j.at("detections").get<std::string>());
    c.output_dir = resolve(base_dir, j.contains("output_dir") ? j.at("output_dir").get<std::string>() : "output");
    if (check_files) {
      for (const auto& p : {c.imu_path, c.detections_path}) {
        if (!fs::exists(p)) throw ConfigError("referenced file '" + p.string() + "' does not exist");
      }
    }
    if (j.contains("board")) c.board = board_from_json(j.at("board"));
    if (!j.contains("cameras")) throw ConfigError("run config needs 'cameras'");
    c.cameras = cameras_from_json(j.at("cameras"));

    if (!j.contains("noise")) throw ConfigError("run config needs a 'noise' block");
    const json& nz = j.at("noise");
    check_keys(nz, {"gyro_noise_density", "accel_noise_density", "gyro_sigma", "accel_sigma", "pixel_sigma"},
               "noise");
    if (nz.contains("gyro_noise_density")) c.gyro_noise_density = get_number(nz, "gyro_noise_density", "noise");
    if (nz.contains("accel_noise_density")) c.accel_noise_density = get_number(nz, "accel_noise_density", "noise");
    if (nz.contains("gyro_sigma")) c.gyro_sigma = get_number(nz, "gyro_sigma", "noise");
    if (nz.contains("accel_sigma")) c.accel_sigma = get_number(nz, "accel_sigma", "noise");
    const bool densities = c.gyro_noise_density && c.accel_noise_density;
    const bool sigmas = c.gyro_sigma && c.accel_sigma;
    if (densities == sigmas) {
      throw ConfigError("noise block needs either both noise densities or both per-sample sigmas");
    }
    for (const auto& v : {c.gyro_noise_density, c.accel_noise_density, c.gyro_sigma, c.accel_sigma}) {
      if (v && !(*v > 0.0)) throw ConfigError("IMU noise values must be positive");
    }
    c.pixel_sigma = get_number_or(nz, "pixel_sigma", 1.0, "noise");
    if (!(c.pixel_sigma > 0.0)) throw ConfigError("pixel_sigma must be positive");
    for (auto& cam : c.cameras) cam.pixel_sigma = c.pixel_sigma;
    for (const auto& cam : c.cameras) cam.validate();

    if (j.contains("solver")) {
      const json& s = j.at("solver");
      const std::string where = "solver";
      check_keys(s,
                 {"scheme", "huber_delta_px", "max_inner", "max_outer", "gradient_tol", "relative_cost_tol",
                  "time_offset_tol", "initial_lambda", "max_lambda", "num_threads"},
                 where);
      if (s.contains("scheme")) {
        if (!s.at("scheme").is_string()) throw ConfigError("solver.scheme must be a string");
        c.solver.scheme = scheme_from_string(s.at("scheme").get<std::string>());
      }
      c.solver.huber_delta = get_number_or(s, "huber_delta_px", c.solver.huber_delta, where);
      c.solver.max_inner = get_int_or(s, "max_inner", c.solver.max_inner, where);
      c.solver.max_outer = get_int_or(s, "max_outer", c.solver.max_outer, where);
      c.solver.gradient_tol = get_number_or(s, "gradient_tol", c.solver.gradient_tol, where);
      c.solver.relative_cost_tol = get_number_or(s, "relative_cost_tol", c.solver.relative_cost_tol, where);
      c.solver.time_offset_tol = get_number_or(s, "time_offset_tol", c.solver.time_offset_tol, where);
      c.solver.initial_lambda = get_number_or(s, "initial_lambda", c.solver.initial_lambda, where);
      c.solver.max_lambda = get_number_or(s, "max_lambda", c.solver.max_lambda, where);
      c.solver.num_threads = get_int_or(s, "num_threads", c.solver.num_threads, where);
      if (c.solver.max_inner < 1 || c.solver.max_outer < 1) throw ConfigError("solver iteration limits must be >= 1");
      if (!(c.solver.initial_lambda > 0.0) || !(c.solver.max_lambda > c.solver.initial_lambda)) {
        throw ConfigError("solver damping limits must satisfy 0 < initial_lambda < max_lambda");
      }
      if (c.solver.num_threads < 0) throw ConfigError("solver.num_threads must be >= 0");
    }
    c.gravity_norm = get_number_or(j, "gravity_norm", c.gravity_norm, "run config");
    if (!(c.gravity_norm > 0.0)) throw ConfigError("gravity_norm must be positive");
    c.cam_rate_decimate = get_int_or(j, "cam_rate_decimate", 1, "run config");
    if (c.cam_rate_decimate < 1) throw ConfigError("cam_rate_decimate must be >= 1");

    if (j.contains("initial_guess")) {
      const json& g = j.at("initial_guess");
      check_keys(g, {"T_IC0", "T_IC1", "time_offset_s", "b_gyro", "b_accel", "gravity"}, "initial_guess");
      if (g.contains("T_IC0")) c.overrides.T_IC0 = pose_from_json(g.at("T_IC0"), "initial_guess.T_IC0");
      if (g.contains("T_IC1")) c.overrides.T_IC1 = pose_from_json(g.at("T_IC1"), "initial_guess.T_IC1");
      if (g.contains("time_offset_s")) c.overrides.time_offset = get_number(g, "time_offset_s", "initial_guess");
      if (g.contains("b_gyro")) c.overrides.b_gyro = vec3_from_json(g.at("b_gyro"), "initial_guess.b_gyro");
      if (g.contains("b_accel")) c.overrides.b_accel = vec3_from_json(g.at("b_accel"), "initial_guess.b_accel");
      if (g.contains("gravity")) {
        c.overrides.gravity = vec3_from_json(g.at("gravity"), "initial_guess.gravity");
        if (!(c.overrides.gravity->norm() > 0.0)) throw ConfigError("initial_guess.gravity must be nonzero");
      }
    }
    return c;
  });
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_text_file(path), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c, const fs::path& base_dir) {
  const auto rel = [&](const fs::path& p) { return p.lexically_relative(base_dir).generic_string(); };
  json cams = json::array();
  for (const auto& cam : c.cameras) cams.push_back(camera_to_json(cam));
  json noise = {{"pixel_sigma", c.pixel_sigma}};
  if (c.gyro_noise_density) noise["gyro_noise_density"] = *c.gyro_noise_density;
  if (c.accel_noise_density) noise["accel_noise_density"] = *c.accel_noise_density;
  if (c.gyro_sigma) noise["gyro_sigma"] = *c.gyro_sigma;
  if (c.accel_sigma) noise["accel_sigma"] = *c.accel_sigma;
  const json solver = {{"scheme", to_string(c.solver.scheme)},
                       {"huber_delta_px", c.solver.huber_delta},
                       {"max_inner", c.solver.max_inner},
                       {"max_outer", c.solver.max_outer},
                       {"gradient_tol", c.solver.gradient_tol},
                       {"relative_cost_tol", c.solver.relative_cost_tol},
                       {"time_offset_tol", c.solver.time_offset_tol},
                       {"initial_lambda", c.solver.initial_lambda},
                       {"max_lambda", c.solver.max_lambda},
                       {"num_threads", c.solver.num_threads}};
  const json j = {{"imu", rel(c.imu_path)},
                  {"detections", rel(c.detections_path)},
                  {"output_dir", rel(c.output_dir)},
                  {"board", board_to_json(c.board)},
                  {"cameras", cams},
                  {"noise", noise},
                  {"solver", solver},
                  {"gravity_norm", c.gravity_norm},
                  {"cam_rate_decimate", c.cam_rate_decimate}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Simulation config

SimulateConfig parse_simulate_config(const std::string& text, const fs::path& base_dir) {
  return rethrow_json_errors<ConfigError>("simulate config", [&] {
    const json j = parse_json(text, "simulate config");
    const std::string where = "simulate config";
    check_keys(j,
               {"output_dir", "seed", "duration", "imu_rate", "cam_rate", "num_cameras", "time_offset_s", "b_gyro",
                "b_accel", "gyro_noise_density", "accel_noise_density", "pixel_sigma", "run_pixel_sigma", "board",
                "cameras", "T_IC0", "T_IC1", "profile", "camera_start", "camera_end_margin"},
               where);
    SimulateConfig c;
    SynthConfig& s = c.synth;
    c.output_dir = resolve(base_dir, j.contains("output_dir") ? j.at("output_dir").get<std::string>() : "sim");
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      s.seed = j.at("seed").get<std::uint64_t>();
    }
    s.duration = get_number_or(j, "duration", s.duration, where);
    s.imu_rate = get_number_or(j, "imu_rate", s.imu_rate, where);
    s.cam_rate = get_number_or(j, "cam_rate", s.cam_rate, where);
    s.num_cameras = get_int_or(j, "num_cameras", s.num_cameras, where);
    s.time_offset = get_number_or(j, "time_offset_s", s.time_offset, where);
    if (j.contains("b_gyro")) s.b_gyro = vec3_from_json(j.at("b_gyro"), "b_gyro");
    if (j.contains("b_accel")) s.b_accel = vec3_from_json(j.at("b_accel"), "b_accel");
    s.gyro_noise_density = get_number_or(j, "gyro_noise_density", s.gyro_noise_density, where);
    s.accel_noise_density = get_number_or(j, "accel_noise_density", s.accel_noise_density, where);
    s.pixel_sigma = get_number_or(j, "pixel_sigma", s.pixel_sigma, where);
    c.run_pixel_sigma = get_number_or(j, "run_pixel_sigma", c.run_pixel_sigma, where);
    if (!(c.run_pixel_sigma > 0.0)) throw ConfigError("run_pixel_sigma must be positive");
    s.camera_start = get_number_or(j, "camera_start", s.camera_start, where);
    s.camera_end_margin = get_number_or(j, "camera_end_margin", s.camera_end_margin, where);
    if (j.contains("board")) {
      c.board = board_from_json(j.at("board"));
      s.board = c.board.build();
    }
    if (j.contains("cameras")) {
      s.cameras = cameras_from_json(j.at("cameras"));
    }
    if (j.contains("T_IC0")) s.T_IC[0] = pose_from_json(j.at("T_IC0"), "T_IC0");
    if (j.contains("T_IC1")) s.T_IC[1] = pose_from_json(j.at("T_IC1"), "T_IC1");
    if (j.contains("profile")) {
      const json& p = j.at("profile");
      check_keys(p,
                 {"rot_amplitude", "rot_frequency", "rot_phase", "trans_amplitude", "trans_frequency", "trans_phase"},
                 "profile");
      TrajectoryProfile& t = s.profile;
      if (p.contains("rot_amplitude")) t.rot_amplitude = vec3_from_json(p.at("rot_amplitude"), "rot_amplitude");
      if (p.contains("rot_frequency")) t.rot_frequency = vec3_from_json(p.at("rot_frequency"), "rot_frequency");
      if (p.contains("rot_phase")) t.rot_phase = vec3_from_json(p.at("rot_phase"), "rot_phase");
      if (p.contains("trans_amplitude")) {
        t.trans_amplitude = vec3_from_json(p.at("trans_amplitude"), "trans_amplitude");
      }
      if (p.contains("trans_frequency")) {
        t.trans_frequency = vec3_from_json(p.at("trans_frequency"), "trans_frequency");
      }
      if (p.contains("trans_phase")) t.trans_phase = vec3_from_json(p.at("trans_phase"), "trans_phase");
    }
    s.validate();
    return c;
  });
}

SimulateConfig load_simulate_config(const fs::path& path) {
  return parse_simulate_config(read_text_file(path), path.parent_path());
}

void write_simulation(const SimulateConfig& config, const SyntheticDataset& data) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create '" + config.output_dir.string() + "': " + ec.message());
  const SynthConfig& s = config.synth;
  write_imu_csv(config.output_dir / "imu.csv", data.imu);
  write_detections(config.output_dir / "detections.json", data.frames, s.num_cameras);
  write_truth(config.output_dir / "truth.json", data.truth);

  RunConfig run;
  run.imu_path = config.output_dir / "imu.csv";
  run.detections_path = config.output_dir / "detections.json";
  run.output_dir = config.output_dir / "calibration";
  run.board = config.board;
  run.cameras.assign(s.cameras.begin(), s.cameras.begin() + s.num_cameras);
  // A noiseless simulation still needs a finite noise model for weighting.
  run.gyro_noise_density = s.gyro_noise_density > 0.0 ? s.gyro_noise_density : 1.6968e-4;
  run.accel_noise_density = s.accel_noise_density > 0.0 ? s.accel_noise_density : 2.0e-3;
  run.pixel_sigma = config.run_pixel_sigma;
  run.gravity_norm = s.profile.gravity.norm();
  write_text_file(config.output_dir / "run.json", run_config_to_json(run, config.output_dir));
}

// ---------------------------------------------------------------------------
// Report

namespace {

json calib_to_json(const CalibState& c, int num_cameras) {
  json j = {{"T_IC0", pose_to_json(c.T_IC[0])},
            {"time_offset_s", c.total_time_offset()},
            {"b_gyro", vec3_to_json(c.b_gyro)},
            {"b_accel", vec3_to_json(c.b_accel)},
            {"gravity", vec3_to_json(c.gravity())},
            {"theta", c.theta},
            {"phi", c.phi},
            {"gravity_frame", pose_to_json(Pose(c.gravity_frame, Vec3::Zero()))},
            {"gravity_norm", c.gravity_norm}};
  if (num_cameras == 2) j["T_IC1"] = pose_to_json(c.T_IC[1]);
  return j;
}

int report_cameras(const CalibrationReport& r) { return std::clamp(r.num_cameras, 1, 2); }

}  // namespace

std::string report_to_json(const CalibrationReport& r) {
  const int ncam = report_cameras(r);
  const CalibState& a = r.initial;
  const CalibState& b = r.final_state;
  json deltas = {{"time_offset_s", b.total_time_offset() - a.total_time_offset()},
                 {"b_gyro", vec3_to_json(b.b_gyro - a.b_gyro)},
                 {"b_accel", vec3_to_json(b.b_accel - a.b_accel)},
                 {"gravity_deg", std::acos(std::clamp(a.gravity().normalized().dot(b.gravity().normalized()),
                                                          -1.0, 1.0)) *
                                     180.0 / M_PI}};
  for (int n = 0; n < ncam; ++n) {
    const auto un = static_cast<std::size_t>(n);
    deltas["T_IC" + std::to_string(n)] = {
        {"rotation_deg", rotation_angle_between(a.T_IC[un].R, b.T_IC[un].R) * 180.0 / M_PI},
        {"translation_m", (b.T_IC[un].p - a.T_IC[un].p).norm()}};
  }
  json log = json::array();
  for (const auto& it : r.log) {
    log.push_back({{"outer", it.outer}, {"inner", it.inner}, {"cost", it.cost}, {"lambda", it.lambda},
                   {"step_norm", it.step_norm}, {"accepted", it.accepted},
                   {"time_offset_shift_s", it.time_offset_shift}});
  }
  json timings = json::object();
  for (const auto& [k, v] : r.timings_s) timings[k] = v;
  json rmse_cam = json::array();
  for (int n = 0; n < ncam; ++n) rmse_cam.push_back(r.reprojection_rmse_px_per_camera[static_cast<std::size_t>(n)]);

  const json j = {{"converged", r.converged},
                  {"failed", r.failed},
                  {"message", r.message},
                  {"num_cameras", ncam},
                  {"result", calib_to_json(b, ncam)},
                  {"initial", calib_to_json(a, ncam)},
                  {"deltas", deltas},
                  {"initial_cost", r.initial_cost},
                  {"final_cost", r.final_cost},
                  {"reprojection_rmse_px", r.reprojection_rmse_px},
                  {"reprojection_rmse_px_per_camera", rmse_cam},
                  {"imu_rmse_whitened", r.imu_rmse_whitened},
                  {"num_frames", r.num_frames},
                  {"dimension", r.dimension},
                  {"num_camera_residuals", r.num_camera_residuals},
                  {"inner_iterations", r.inner_iterations},
                  {"outer_iterations", r.outer_iterations},
                  {"time_offset_shifts_s", r.time_offset_shifts},
                  {"dropped_frame_times_s", r.dropped_frame_times},
                  {"dropped_observations", r.dropped_observations},
                  {"regularized_imu_factors", r.regularized_imu_factors},
                  {"warnings", r.warnings},
                  {"iterations", log},
                  {"timings_s", timings}};
  return j.dump(2) + "\n";
}

std::string report_summary(const CalibrationReport& r) {
  const int ncam = report_cameras(r);
  const CalibState& c = r.final_state;
  std::ostringstream os;
  os.setf(std::ios::fixed);
  const std::string status = r.converged ? "converged" : r.failed ? "FAILED" : "not converged";
  os << "status: " << status;
  if (!r.message.empty() && r.message != status) os << " (" << r.message << ")";
  os << "\n";
  os << "frames: " << r.num_frames << ", optimized dimension: " << r.dimension << "\n";
  os << "iterations: " << r.inner_iterations << " LM, " << r.outer_iterations << " outer\n";
  os.precision(6);
  os << "time offset: " << c.total_time_offset() * 1e3 << " ms (initial " << r.initial.total_time_offset() * 1e3
     << " ms)\n";
  for (int n = 0; n < ncam; ++n) {
    const auto& T = c.T_IC[static_cast<std::size_t>(n)];
    const Vec3 rv = so3_log(T.R);
    os << "T_IC" << n << ": rotation vector [" << rv.x() << ", " << rv.y() << ", " << rv.z() << "] rad, translation ["
       << T.p.x() << ", " << T.p.y() << ", " << T.p.z() << "] m\n";
  }
  os << "gyro bias: [" << c.b_gyro.x() << ", " << c.b_gyro.y() << ", " << c.b_gyro.z() << "] rad/s\n";
  os << "accel bias: [" << c.b_accel.x() << ", " << c.b_accel.y() << ", " << c.b_accel.z() << "] m/s^2\n";
  const Vec3 g = c.gravity();
  os << "gravity: [" << g.x() << ", " << g.y() << ", " << g.z() << "] m/s^2\n";
  os.precision(4);
  os << "reprojection RMSE: " << r.reprojection_rmse_px << " px";
  for (int n = 0; n < ncam; ++n) os << " (cam" << n << " " << r.reprojection_rmse_px_per_camera[static_cast<std::size_t>(n)] << ")";
  os << "\nIMU whitened RMSE: " << r.imu_rmse_whitened << "\n";
  os << "cost: " << r.initial_cost << " -> " << r.final_cost << "\n";
  if (!r.dropped_frame_times.empty() || r.dropped_observations > 0) {
    os << "dropped: " << r.dropped_frame_times.size() << " frames, " << r.dropped_observations << " observations\n";
  }
  os.precision(3);
  for (const auto& [k, v] : r.timings_s) os << "time " << k << ": " << v << " s\n";
  for (const auto& w : r.warnings) os << "warning: " << w << "\n";
  return os.str();
}

void emit_report(const CalibrationReport& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  write_text_file(dir / "result.json", report_to_json(report));
  write_text_file(dir / "summary.txt", report_summary(report));
}

CalibrationResult parse_result(const std::string& text) {
  return rethrow_json_errors<FormatError>("result", [&] {
    const json j = parse_json(text, "result");
    if (!j.is_object() || !j.contains("result") || !j.contains("converged")) {
      throw FormatError("result file needs 'converged' and 'result'");
    }
    CalibrationResult out;
    out.converged = j.at("converged").get<bool>();
    out.num_cameras = j.value("num_cameras", 2);
    const json& r = j.at("result");
    out.T_IC[0] = pose_from_json(r.at("T_IC0"), "result.T_IC0");
    if (out.num_cameras == 2) out.T_IC[1] = pose_from_json(r.at("T_IC1"), "result.T_IC1");
    out.time_offset = get_number(r, "time_offset_s", "result");
    out.b_gyro = vec3_from_json(r.at("b_gyro"), "result.b_gyro");
    out.b_accel = vec3_from_json(r.at("b_accel"), "result.b_accel");
    out.gravity = vec3_from_json(r.at("gravity"), "result.gravity");
    return out;
  });
}

CalibrationResult load_result(const fs::path& path) { return parse_result(read_text_file(path)); }

ScoreReport score(const CalibrationResult& result, const GroundTruth& truth) {
  ScoreReport s;
  s.num_cameras = std::min(result.num_cameras, truth.num_cameras);
  for (int n = 0; n < s.num_cameras; ++n) {
    const auto un = static_cast<std::size_t>(n);
    s.rotation_deg[un] = rotation_angle_between(result.T_IC[un].R, truth.T_IC[un].R) * 180.0 / M_PI;
    s.translation_cm[un] = (result.T_IC[un].p - truth.T_IC[un].p).norm() * 100.0;
  }
  s.time_offset_ms = (result.time_offset - truth.time_offset) * 1e3;
  const double c = result.gravity.normalized().dot(truth.gravity.normalized());
  s.gravity_deg = std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / M_PI;
  s.b_gyro = (result.b_gyro - truth.b_gyro).norm();
  s.b_accel = (result.b_accel - truth.b_accel).norm();
  return s;
}

std::string format_score(const ScoreReport& s) {
  char buf[160];
  std::string out;
  for (int n = 0; n < s.num_cameras; ++n) {
    const auto un = static_cast<std::size_t>(n);
    std::snprintf(buf, sizeof(buf), "cam%d rotation error: %.6f deg\ncam%d translation error: %.6f cm\n", n,
                  s.rotation_deg[un], n, s.translation_cm[un]);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "time offset error: %+.6f ms\ngravity direction error: %.6f deg\n",
                s.time_offset_ms, s.gravity_deg);
  out += buf;
  std::snprintf(buf, sizeof(buf), "gyro bias error: %.3e rad/s\naccel bias error: %.3e m/s^2\n", s.b_gyro, s.b_accel);
  out += buf;
  return out;
}

}  // namespace dtcalib
