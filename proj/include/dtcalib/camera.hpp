#ifndef DTCALIB_CAMERA_HPP_
#define DTCALIB_CAMERA_HPP_

#include <array>
#include <optional>

#include <Eigen/Core>

#include "dtcalib/board.hpp"
#include "dtcalib/lie.hpp"
#include "dtcalib/state.hpp"

namespace dtcalib {

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Pre-calibrated pinhole camera with optional radial-tangential distortion (k1, k2, p1, p2).
struct CameraModel {
  int camera_index = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 4> distortion{0.0, 0.0, 0.0, 0.0};
  double pixel_sigma = 1.0;
  int width = 0;   ///< 0 when unknown
  int height = 0;  ///< 0 when unknown
  double z_min = 1e-3;

  bool has_distortion() const;
  bool has_bounds() const { return width > 0 && height > 0; }
  bool in_bounds(const Vec2& px) const;
  void validate() const;
};

struct CornerObservation {
  int frame_index = 0;
  int camera_index = 0;
  int corner_id = 0;
  Vec2 pixel = Vec2::Zero();
};

/// Projection without the cheirality check. Fills d(pixel)/d(p_cam) when requested.
Vec2 project_unchecked(const CameraModel& model, const Vec3& p_cam, Mat23* J = nullptr);

/// Returns nullopt when the point is not in front of the camera (z <= z_min).
std::optional<Vec2> try_project(const CameraModel& model, const Vec3& p_cam, Mat23* J = nullptr);

/// Throws CheiralityError for points behind the camera.
Vec2 project(const CameraModel& model, const Vec3& p_cam, Mat23* J = nullptr);

/// Normalized image coordinates (x/z, y/z) of a pixel, undoing distortion iteratively.
Vec2 unproject_normalized(const CameraModel& model, const Vec2& pixel);

/// World-frame angular rate (R * omega) followed by the linear velocity.
Eigen::Matrix<double, 6, 1> time_offset_jacobian(const MotionState& motion, const Vec3& gyro_unbiased);

/**
 * @brief IMU pose at the frame time shifted by the current time-offset increment.
 *
 * First-order extrapolation from the discrete state: R * Exp(omega * dt_d) and
 * p + v * dt_d, with omega the bias-corrected gyro at the frame time.
 */
struct FrameKinematics {
  Rotation R_WI = Rotation::Identity();
  Vec3 p_W = Vec3::Zero();
  Vec3 omega_W = Vec3::Zero();
  Vec3 v_W = Vec3::Zero();
  double time_offset_increment = 0.0;
  Mat3 rot_bias_gyro = Mat3::Zero();  ///< world-frame rotation perturbation per unit gyro-bias change

  static FrameKinematics Compute(const MotionState& x, const Vec3& raw_gyro, const CalibState& calib);
};

/// Jacobians of one reprojection residual (pixels, not whitened).
struct ReprojectionJacobians {
  Eigen::Matrix<double, 2, 9> motion;     ///< [dR (left), dv, dp]
  Eigen::Matrix<double, 2, 6> extrinsic;  ///< [dR (left), dp] of T_IC for the observing camera
  Vec2 time_offset;
  Eigen::Matrix<double, 2, 3> bias_gyro;
};

/// Residual pi(T_IC^-1 T_WI(t + t_d)^-1 p_W) - pixel; nullopt on cheirality failure.
std::optional<Vec2> reprojection_residual(const FrameKinematics& kin, const Pose& T_IC, const Vec3& p_world,
                                          const Vec2& pixel, const CameraModel& model,
                                          ReprojectionJacobians* jac = nullptr);

/**
 * @brief Factorized form of the reprojection Jacobians for one frame and camera.
 *
 * Every parameter acts on the corners only through the camera pose, so the 2x19
 * Jacobian [motion | extrinsic | time offset | gyro bias] of a corner with camera
 * coordinates p equals point_jacobian(J_pi, p) * camera_pose_jacobian(kin, T_IC),
 * where the 6-vector is a left perturbation (rotation, translation) of T_CW.
 */
Eigen::Matrix<double, 6, 19> camera_pose_jacobian(const FrameKinematics& kin, const Pose& T_IC);

/// J_pi * [-hat(p_cam), I].
Eigen::Matrix<double, 2, 6> point_jacobian(const Mat23& J_pi, const Vec3& p_cam);

/// World-to-camera transform at the extrapolated frame pose.
Pose camera_from_world(const FrameKinematics& kin, const Pose& T_IC);

/// Convenience overload; throws CheiralityError when the corner is behind the camera.
Vec2 reprojection_residual(const MotionState& motion, const Vec3& raw_gyro_at_frame, const CalibState& calib,
                           const CornerObservation& obs, const BoardGeometry& board, const CameraModel& model,
                           ReprojectionJacobians* jac = nullptr);

}  // namespace dtcalib

#endif  // DTCALIB_CAMERA_HPP_
