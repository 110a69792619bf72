#ifndef DTCALIB_INIT_HPP_
#define DTCALIB_INIT_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtcalib/board.hpp"
#include "dtcalib/camera.hpp"
#include "dtcalib/dataset.hpp"
#include "dtcalib/imu_preint.hpp"
#include "dtcalib/state.hpp"

namespace dtcalib {

/// Minimum number of camera-0 corners for a frame to be initialized.
constexpr int kMinCornersForPose = 6;

/**
 * @brief Camera pose (camera -> board/world) from one view of the planar board.
 *
 * Normalized DLT homography, decomposed into rotation and translation, then at
 * most 10 Gauss-Newton iterations on the reprojection error. Returns nullopt
 * with a diagnostic when there are too few corners or the DLT is rank deficient.
 */
std::optional<Pose> estimate_board_pose(std::span<const CornerMeasurement> corners, const BoardGeometry& board,
                                        const CameraModel& camera, std::string* diagnostic = nullptr);

struct FramePoses {
  std::vector<std::optional<Pose>> T_WC;  ///< one entry per input frame
  std::vector<std::size_t> failed;
  std::vector<std::string> diagnostics;
};

FramePoses init_frame_poses(const std::vector<FrameDetections>& frames, const BoardGeometry& board,
                            const CameraModel& camera);

struct TimeOffsetEstimate {
  double offset = 0.0;  ///< seconds, t_I = t_C + offset
  double correlation = 0.0;
  bool fallback = false;
  std::string warning;
};

/**
 * @brief Coarse time offset from angular-speed cross-correlation.
 *
 * Camera angular speed comes from consecutive frame rotations; the gyro speed is
 * the rotation angle integrated over the same (shifted) interval. Shifts are
 * scanned on the IMU sample grid within +-window and the normalized
 * cross-correlation peak is refined by a parabola through its neighbours.
 */
TimeOffsetEstimate init_time_offset(std::span<const ImuSample> imu, std::span<const double> frame_times,
                                    std::span<const Rotation> R_WC, double window = 0.1);

/**
 * @brief Camera-to-IMU rotation by aligning per-interval rotation vectors (Wahba / Kabsch).
 *
 * frame_times must already be on the IMU clock. Throws DegenerateMotion with
 * fewer than 50 well-excited intervals or when rotation spans fewer than two axes.
 */
Rotation init_extrinsic_rotation(std::span<const ImuSample> imu, std::span<const double> frame_times,
                                 std::span<const Rotation> R_WC, const Vec3& gyro_bias = Vec3::Zero());

struct GravityBiasVelocity {
  Vec3 gravity = Vec3::Zero();  ///< world frame, norm rho
  double theta = 0.0;
  double phi = 0.0;
  Rotation gravity_frame = Rotation::Identity();
  Vec3 b_gyro = Vec3::Zero();
  Vec3 b_accel = Vec3::Zero();
  std::vector<Vec3> velocities;
  std::string warning;
};

/**
 * @brief Gravity direction, constant biases and per-frame velocities given IMU poses.
 *
 * Gyro bias: least squares on the rotation mismatch between gyro-integrated and
 * pose-derived interval rotations, linearized with the preintegration bias
 * Jacobian. Gravity: the exact time average of R * accel over the sequence,
 * corrected by the end-point velocity change. Velocities: central differences.
 */
GravityBiasVelocity init_gravity_biases_velocities(std::span<const ImuSample> imu,
                                                   std::span<const double> frame_times,
                                                   std::span<const Pose> T_WI, const ImuNoiseModel& noise,
                                                   double gravity_norm);

struct InitialGuessOverrides {
  std::optional<Pose> T_IC0;
  std::optional<Pose> T_IC1;
  std::optional<double> time_offset;
  std::optional<Vec3> b_gyro;
  std::optional<Vec3> b_accel;
  std::optional<Vec3> gravity;
};

struct InitialGuess {
  std::vector<std::size_t> frame_indices;  ///< input frames kept, in order
  std::vector<MotionState> motion;         ///< times on the IMU clock (camera time + offset)
  CalibState calib;                        ///< time_offset holds the initial offset
  std::vector<std::size_t> failed_frames;
  std::vector<std::string> warnings;
  TimeOffsetEstimate time_offset;
};

InitialGuess initialize(std::span<const ImuSample> imu, const std::vector<FrameDetections>& frames,
                        const BoardGeometry& board, const std::vector<CameraModel>& cameras,
                        const ImuNoiseModel& noise, double gravity_norm,
                        const InitialGuessOverrides& overrides = {});

}  // namespace dtcalib

#endif  // DTCALIB_INIT_HPP_
