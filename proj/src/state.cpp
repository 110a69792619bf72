#include "dtcalib/state.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dtcalib/errors.hpp"

namespace dtcalib {

Vec3 gravity_from_angles(double rho, double theta, double phi) {
  return rho * Vec3(std::cos(theta) * std::sin(phi), std::sin(theta) * std::sin(phi), std::cos(phi));
}

Eigen::Matrix<double, 3, 2> gravity_angle_jacobian(double rho, double theta, double phi) {
  Eigen::Matrix<double, 3, 2> J;
  J << -std::sin(theta) * std::sin(phi), std::cos(theta) * std::cos(phi),
       std::cos(theta) * std::sin(phi), std::sin(theta) * std::cos(phi),
       0.0, -std::sin(phi);
  return rho * J;
}

std::array<double, 2> angles_from_gravity(const Vec3& g) {
  const double n = g.norm();
  if (!(n > 0.0) || !g.allFinite()) throw InvalidArgument("gravity direction must be finite and nonzero");
  const double phi = std::acos(std::clamp(g.z() / n, -1.0, 1.0));
  const double theta = std::atan2(g.y(), g.x());
  return {theta, phi};
}

void CalibState::set_gravity_direction(const Vec3& g_direction) {
  constexpr double kPoleMargin = 1e-3;
  gravity_frame = Rotation::Identity();
  auto [th, ph] = angles_from_gravity(g_direction);
  if (ph < kPoleMargin || ph > std::numbers::pi - kPoleMargin) {
    // Relabel by a quarter turn about x so the direction lands on the equator.
    gravity_frame = so3_exp(Vec3(0.5 * std::numbers::pi, 0.0, 0.0));
    const auto relabeled = angles_from_gravity(gravity_frame.transpose() * g_direction);
    th = relabeled[0];
    ph = relabeled[1];
  }
  theta = th;
  phi = ph;
}

void apply_motion_update(MotionState& x, const Eigen::Ref<const Eigen::Matrix<double, 9, 1>>& delta) {
  using namespace layout;
  x.R_WI = normalize_rotation(so3_exp(delta.segment<3>(kRot)) * x.R_WI);
  x.v_W += delta.segment<3>(kVel);
  x.p_W += delta.segment<3>(kPos);
}

void apply_calib_update(CalibState& c, const Eigen::Ref<const Eigen::Matrix<double, 21, 1>>& delta) {
  using namespace layout;
  for (int n = 0; n < 2; ++n) {
    const int o = extrinsic(n);
    c.T_IC[n].R = normalize_rotation(so3_exp(delta.segment<3>(o)) * c.T_IC[n].R);
    c.T_IC[n].p += delta.segment<3>(o + 3);
  }
  c.time_offset_increment += delta(kTimeOffset);
  c.b_gyro += delta.segment<3>(kBiasGyro);
  c.b_accel += delta.segment<3>(kBiasAccel);
  c.theta += delta(kGravity);
  c.phi += delta(kGravity + 1);
}

}  // namespace dtcalib
