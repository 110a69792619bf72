#include "dtcalib/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dtcalib/errors.hpp"

namespace dtcalib {

namespace {

struct Sinusoid {
  Vec3 value;
  Vec3 rate;
  Vec3 accel;
};

Sinusoid sinusoid(double t, const Vec3& amplitude, const Vec3& frequency, const Vec3& phase) {
  Sinusoid s;
  for (int i = 0; i < 3; ++i) {
    const double w = 2.0 * std::numbers::pi * frequency(i);
    const double arg = w * t + phase(i);
    s.value(i) = amplitude(i) * std::sin(arg);
    s.rate(i) = amplitude(i) * w * std::cos(arg);
    s.accel(i) = -amplitude(i) * w * w * std::sin(arg);
  }
  return s;
}

std::mt19937_64 sensor_rng(std::uint64_t seed, std::uint64_t sensor) {
  std::seed_seq seq{seed, sensor};
  return std::mt19937_64(seq);
}

}  // namespace

TrajectorySample analytic_trajectory(double t, const TrajectoryProfile& profile) {
  const Sinusoid rot = sinusoid(t, profile.rot_amplitude, profile.rot_frequency, profile.rot_phase);
  const Sinusoid tr = sinusoid(t, profile.trans_amplitude, profile.trans_frequency, profile.trans_phase);
  TrajectorySample s;
  s.T_WI.R = so3_exp(rot.value) * profile.R0;
  s.T_WI.p = profile.p0 + tr.value;
  s.v_W = tr.rate;
  s.a_W = tr.accel;
  const Vec3 omega_W = left_jacobian_so3(rot.value) * rot.rate;
  s.gyro = s.T_WI.R.transpose() * omega_W;
  s.accel = s.T_WI.R.transpose() * (s.a_W - profile.gravity);
  return s;
}

SynthConfig SynthConfig::EurocLike() {
  SynthConfig c;
  c.board = BoardGeometry::BuildGrid(6, 6, 0.088, 0.3);
  c.T_IC[0] = Pose(so3_exp(Vec3(0.01, -0.02, 1.56)), Vec3(-0.0216, -0.0647, 0.0098));
  c.T_IC[1] = Pose(so3_exp(Vec3(0.012, -0.018, 1.565)), Vec3(-0.0199, 0.0454, 0.0079));
  c.gyro_noise_density = 1.6968e-4;
  c.accel_noise_density = 2.0e-3;
  c.pixel_sigma = 0.5;
  for (int n = 0; n < 2; ++n) {
    CameraModel cam;
    cam.camera_index = n;
    cam.fx = cam.fy = 460.0;
    cam.cx = 376.0;
    cam.cy = 240.0;
    cam.width = 752;
    cam.height = 480;
    cam.pixel_sigma = c.pixel_sigma;
    c.cameras.push_back(cam);
  }

  // Camera 0 rests 1 m in front of the board centre, looking at it.
  Rotation R_WC;
  R_WC.col(0) = Vec3::UnitX();
  R_WC.col(1) = -Vec3::UnitY();
  R_WC.col(2) = -Vec3::UnitZ();
  const Vec3 center = c.board.center();
  const Pose T_WC(R_WC, Vec3(center.x(), center.y(), 1.0));
  const Pose T_WI = T_WC * c.T_IC[0].inverse();

  TrajectoryProfile& p = c.profile;
  p.R0 = T_WI.R;
  p.p0 = T_WI.p;
  p.rot_amplitude = Vec3(0.22, 0.22, 0.35);
  p.rot_frequency = Vec3(0.62, 0.86, 0.54);
  p.rot_phase = Vec3(0.0, 1.1, 2.3);
  p.trans_amplitude = Vec3(0.12, 0.08, 0.15);
  p.trans_frequency = Vec3(0.74, 1.02, 0.58);
  p.trans_phase = Vec3(0.7, 0.0, 1.9);
  return c;
}

void SynthConfig::validate() const {
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (!(imu_rate > 0.0) || !(cam_rate > 0.0)) throw ConfigError("rates must be positive");
  if (imu_rate < 2.0 * cam_rate) throw ConfigError("imu_rate must be at least twice cam_rate");
  if (num_cameras < 1 || num_cameras > 2) throw ConfigError("num_cameras must be 1 or 2");
  if (static_cast<int>(cameras.size()) < num_cameras) throw ConfigError("missing camera intrinsics");
  for (int n = 0; n < num_cameras; ++n) cameras[static_cast<std::size_t>(n)].validate();
  if (board.num_corners() == 0) throw ConfigError("board has no corners");
  if (gyro_noise_density < 0.0 || accel_noise_density < 0.0 || pixel_sigma < 0.0) {
    throw ConfigError("noise levels must be non-negative");
  }
  if (!std::isfinite(time_offset)) throw ConfigError("time offset must be finite");
  if (camera_start < 0.0 || camera_end_margin < 0.0 || camera_start + camera_end_margin >= duration) {
    throw ConfigError("camera window does not fit inside the duration");
  }
}

SyntheticDataset simulate(const SynthConfig& config) {
  config.validate();
  SyntheticDataset out;

  std::mt19937_64 imu_rng = sensor_rng(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double period = 1.0 / config.imu_rate;
  const double sigma_g = config.gyro_noise_density / std::sqrt(period);
  const double sigma_a = config.accel_noise_density / std::sqrt(period);

  out.imu.epoch_ns = config.epoch_ns;
  const auto num_imu = static_cast<std::int64_t>(std::floor(config.duration * config.imu_rate + 1e-9)) + 1;
  for (std::int64_t k = 0; k < num_imu; ++k) {
    const auto offset_ns = static_cast<std::int64_t>(std::llround(static_cast<double>(k) * period * 1e9));
    const double t = static_cast<double>(offset_ns) * 1e-9;
    const TrajectorySample s = analytic_trajectory(t, config.profile);
    ImuSample m;
    m.t = t;
    m.gyro = s.gyro + config.b_gyro;
    m.accel = s.accel + config.b_accel;
    for (int i = 0; i < 3; ++i) m.gyro(i) += sigma_g * normal(imu_rng);
    for (int i = 0; i < 3; ++i) m.accel(i) += sigma_a * normal(imu_rng);
    out.imu.t_ns.push_back(config.epoch_ns + offset_ns);
    out.imu.samples.push_back(m);
  }

  std::array<std::mt19937_64, 2> cam_rng{sensor_rng(config.seed, 1), sensor_rng(config.seed, 2)};
  const double cam_period = 1.0 / config.cam_rate;
  bool any_visible = false;
  for (std::int64_t k = 0;; ++k) {
    const double tau_nominal = config.camera_start + static_cast<double>(k) * cam_period;
    if (tau_nominal > config.duration - config.camera_end_margin) break;
    // Stamps are integer nanoseconds on the camera clock; the capture instant follows from them.
    const auto stamp_ns = static_cast<std::int64_t>(std::llround((tau_nominal - config.time_offset) * 1e9));
    FrameDetections frame;
    frame.t_ns = config.epoch_ns + stamp_ns;
    frame.t = ns_to_seconds(frame.t_ns, config.epoch_ns);
    const double tau = frame.t + config.time_offset;
    const Pose T_WI = analytic_trajectory(tau, config.profile).T_WI;
    for (int n = 0; n < config.num_cameras; ++n) {
      const auto un = static_cast<std::size_t>(n);
      const CameraModel& cam = config.cameras[un];
      const Pose T_CW = (T_WI * config.T_IC[un]).inverse();
      for (int id = 0; id < config.board.num_corners(); ++id) {
        const Vec3 pc = T_CW * config.board.corner(id);
        const double nu = normal(cam_rng[un]);
        const double nv = normal(cam_rng[un]);
        if (pc.z() <= 0.05) continue;
        const Vec2 clean = project_unchecked(cam, pc);
        const Vec2 noisy = clean + config.pixel_sigma * Vec2(nu, nv);
        if (!cam.in_bounds(clean) || !cam.in_bounds(noisy)) continue;
        frame.cameras[un].push_back({id, noisy});
      }
    }
    if (frame.cameras[0].empty() && frame.cameras[1].empty()) continue;
    any_visible = true;
    out.frames.push_back(std::move(frame));
  }
  if (!any_visible) throw CoverageError("the board is never visible from any camera");

  GroundTruth& g = out.truth;
  g.T_IC = config.T_IC;
  g.num_cameras = config.num_cameras;
  g.time_offset = config.time_offset;
  g.b_gyro = config.b_gyro;
  g.b_accel = config.b_accel;
  g.gravity = config.profile.gravity;
  return out;
}

}  // namespace dtcalib
