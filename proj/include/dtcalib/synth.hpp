#ifndef DTCALIB_SYNTH_HPP_
#define DTCALIB_SYNTH_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "dtcalib/board.hpp"
#include "dtcalib/camera.hpp"
#include "dtcalib/dataset.hpp"
#include "dtcalib/lie.hpp"

namespace dtcalib {

/**
 * @brief Closed-form IMU trajectory.
 *
 * R(t) = Exp(phi(t)) * R0 and p(t) = p0 + s(t), where every component of phi and
 * s is amplitude * sin(2 pi frequency t + phase).
 */
struct TrajectoryProfile {
  Vec3 rot_amplitude = Vec3::Zero();  ///< rad
  Vec3 rot_frequency = Vec3::Zero();  ///< Hz
  Vec3 rot_phase = Vec3::Zero();
  Vec3 trans_amplitude = Vec3::Zero();  ///< m
  Vec3 trans_frequency = Vec3::Zero();
  Vec3 trans_phase = Vec3::Zero();
  Rotation R0 = Rotation::Identity();
  Vec3 p0 = Vec3::Zero();
  Vec3 gravity = Vec3(0.0, -9.81, 0.0);
};

struct TrajectorySample {
  Pose T_WI;
  Vec3 v_W = Vec3::Zero();
  Vec3 a_W = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();   ///< body angular rate
  Vec3 accel = Vec3::Zero();  ///< body specific force, R^T (a_W - g)
};

TrajectorySample analytic_trajectory(double t, const TrajectoryProfile& profile);

struct SynthConfig {
  double duration = 60.0;
  double imu_rate = 200.0;
  double cam_rate = 20.0;
  TrajectoryProfile profile;
  int num_cameras = 2;
  std::array<Pose, 2> T_IC{};
  double time_offset = 0.0;  ///< t_I = t_C + time_offset
  Vec3 b_gyro = Vec3::Zero();
  Vec3 b_accel = Vec3::Zero();
  double gyro_noise_density = 0.0;   ///< rad/s/sqrt(Hz)
  double accel_noise_density = 0.0;  ///< m/s^2/sqrt(Hz)
  double pixel_sigma = 0.0;
  BoardGeometry board;
  std::vector<CameraModel> cameras;
  std::uint64_t seed = 0;
  std::int64_t epoch_ns = 1'400'000'000'000'000'000;
  double camera_start = 0.2123;  ///< first frame, IMU clock, seconds after the epoch
  double camera_end_margin = 0.25;

  /// 752x480 stereo pair 1 m from a 6x6 tag board, EuRoC-like extrinsics and IMU noise.
  static SynthConfig EurocLike();

  void validate() const;
};

struct SyntheticDataset {
  ImuStream imu;
  std::vector<FrameDetections> frames;
  GroundTruth truth;
};

/// Throws CoverageError when the board is never visible.
SyntheticDataset simulate(const SynthConfig& config);

}  // namespace dtcalib

#endif  // DTCALIB_SYNTH_HPP_
