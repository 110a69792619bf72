#ifndef DTCALIB_STATE_HPP_
#define DTCALIB_STATE_HPP_

#include <array>
#include <cstddef>

#include <Eigen/Core>

#include "dtcalib/lie.hpp"

namespace dtcalib {

/// IMU pose and velocity at one frame time, in the board (world) frame.
struct MotionState {
  Rotation R_WI = Rotation::Identity();
  Vec3 v_W = Vec3::Zero();
  Vec3 p_W = Vec3::Zero();
  double t = 0.0;  ///< frame time on the IMU clock, seconds

  Pose pose() const { return {R_WI, p_W}; }
};

/// Gravity on the sphere of radius rho: rho * [cos(theta) sin(phi), sin(theta) sin(phi), cos(phi)].
Vec3 gravity_from_angles(double rho, double theta, double phi);
/// d gravity / d [theta, phi].
Eigen::Matrix<double, 3, 2> gravity_angle_jacobian(double rho, double theta, double phi);
/// Inverse of gravity_from_angles for the direction of g. Returns {theta, phi}, phi in [0, pi].
std::array<double, 2> angles_from_gravity(const Vec3& g);

struct CalibState {
  std::array<Pose, 2> T_IC{};        ///< camera n -> IMU
  double time_offset = 0.0;          ///< offset already folded into frame times (t_I = t_C + t_d)
  double time_offset_increment = 0.0;  ///< solved each inner pass, reset on time shift
  Vec3 b_gyro = Vec3::Zero();
  Vec3 b_accel = Vec3::Zero();
  double theta = 0.0;
  double phi = 0.5 * 3.14159265358979323846;
  double gravity_norm = 9.81;
  /// Fixed relabeling applied to the spherical direction; keeps phi away from the poles.
  Rotation gravity_frame = Rotation::Identity();

  double total_time_offset() const { return time_offset + time_offset_increment; }
  Vec3 gravity() const { return gravity_frame * gravity_from_angles(gravity_norm, theta, phi); }
  Eigen::Matrix<double, 3, 2> gravity_jacobian() const {
    return gravity_frame * gravity_angle_jacobian(gravity_norm, theta, phi);
  }
  /// Sets theta/phi (and the relabeling frame if needed) from a gravity direction.
  void set_gravity_direction(const Vec3& g_direction);
};

/// Tangent layout of the optimized state. Motion block: [dR, dv, dp].
namespace layout {
constexpr int kMotionDim = 9;
constexpr int kRot = 0;
constexpr int kVel = 3;
constexpr int kPos = 6;

constexpr int kCalibDim = 21;
/// Extrinsic block of camera n: [dR, dp] starting at 6 * n.
constexpr int extrinsic(int n) { return 6 * n; }
constexpr int kTimeOffset = 12;
constexpr int kBiasGyro = 13;
constexpr int kBiasAccel = 16;
constexpr int kGravity = 19;
}  // namespace layout

/// Number of optimized variables for a problem with the given number of frames.
constexpr std::size_t state_dimension(std::size_t num_frames) {
  return layout::kMotionDim * num_frames + layout::kCalibDim;
}

/// Left-multiplicative retraction on rotations, additive elsewhere.
void apply_motion_update(MotionState& x, const Eigen::Ref<const Eigen::Matrix<double, 9, 1>>& delta);
void apply_calib_update(CalibState& c, const Eigen::Ref<const Eigen::Matrix<double, 21, 1>>& delta);

}  // namespace dtcalib

#endif  // DTCALIB_STATE_HPP_
