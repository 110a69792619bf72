#ifndef DTCALIB_LIE_HPP_
#define DTCALIB_LIE_HPP_

#include <Eigen/Core>

namespace dtcalib {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation matrix in SO(3). Stored as a plain 3x3 matrix.
using Rotation = Eigen::Matrix3d;

/**
 * @brief Rigid transform T = [R p; 0 1] mapping points from the source frame
 * into the target frame (x_target = R * x_source + p).
 */
struct Pose {
  Rotation R = Rotation::Identity();
  Vec3 p = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& rot, const Vec3& trans) : R(rot), p(trans) {}

  static Pose Identity() { return {}; }

  Vec3 operator*(const Vec3& x) const { return R * x + p; }
  Pose operator*(const Pose& o) const { return {R * o.R, R * o.p + p}; }
  Pose inverse() const { return {R.transpose(), -R.transpose() * p}; }

  Eigen::Matrix4d matrix() const;
  static Pose FromMatrix(const Eigen::Matrix4d& T);
};

/// Skew-symmetric matrix such that hat(a) * b = a x b.
Mat3 hat(const Vec3& v);

/// Rotation with axis phi/|phi| and angle |phi|. Throws InvalidArgument on non-finite input.
Rotation so3_exp(const Vec3& phi);

/**
 * @brief Tangent vector of a rotation, angle in [0, pi].
 *
 * Near angle pi the axis is recovered from the symmetric part of R, where the
 * trace formula loses precision. Throws InvalidArgument if R is not a rotation
 * to within 1e-6.
 */
Vec3 so3_log(const Rotation& R);

/// Left Jacobian: Exp(phi + d) ~= Exp(J_l(phi) d) Exp(phi).
Mat3 left_jacobian_so3(const Vec3& phi);
Mat3 left_jacobian_inverse_so3(const Vec3& phi);
/// Right Jacobian, J_r(phi) = J_l(-phi).
Mat3 right_jacobian_so3(const Vec3& phi);

/// Projects a near-rotation back onto SO(3) (closest in Frobenius norm).
Rotation normalize_rotation(const Rotation& R);

bool is_rotation(const Rotation& R, double tol = 1e-9);

/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Rotation& a, const Rotation& b);

}  // namespace dtcalib

#endif  // DTCALIB_LIE_HPP_
