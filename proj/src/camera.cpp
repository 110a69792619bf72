#include "dtcalib/camera.hpp"

#include <Eigen/LU>

#include <cmath>
#include <string>

#include "dtcalib/errors.hpp"

namespace dtcalib {

bool CameraModel::has_distortion() const {
  return distortion[0] != 0.0 || distortion[1] != 0.0 || distortion[2] != 0.0 || distortion[3] != 0.0;
}

bool CameraModel::in_bounds(const Vec2& px) const {
  if (!has_bounds()) return true;
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width - 1.0 && px.y() <= height - 1.0;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
  if (!(pixel_sigma > 0.0)) throw ConfigError("camera pixel_sigma must be positive");
  if (!(z_min > 0.0)) throw ConfigError("camera z_min must be positive");
  if (camera_index < 0 || camera_index > 1) throw ConfigError("camera_index must be 0 or 1");
}

Vec2 project_unchecked(const CameraModel& model, const Vec3& p_cam, Mat23* J) {
  const double inv_z = 1.0 / p_cam.z();
  const double x = p_cam.x() * inv_z;
  const double y = p_cam.y() * inv_z;

  if (!model.has_distortion()) {
    if (J != nullptr) {
      *J << model.fx * inv_z, 0.0, -model.fx * x * inv_z,
            0.0, model.fy * inv_z, -model.fy * y * inv_z;
    }
    return {model.fx * x + model.cx, model.fy * y + model.cy};
  }

  const auto [k1, k2, p1, p2] = model.distortion;
  const double r2 = x * x + y * y;
  const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
  const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;

  if (J != nullptr) {
    const double dradial_dr2 = k1 + 2.0 * k2 * r2;
    const double drad_dx = 2.0 * x * dradial_dr2;
    const double drad_dy = 2.0 * y * dradial_dr2;
    Eigen::Matrix2d D;
    D(0, 0) = radial + x * drad_dx + 2.0 * p1 * y + 6.0 * p2 * x;
    D(0, 1) = x * drad_dy + 2.0 * p1 * x + 2.0 * p2 * y;
    D(1, 0) = y * drad_dx + 2.0 * p1 * x + 2.0 * p2 * y;
    D(1, 1) = radial + y * drad_dy + 6.0 * p1 * y + 2.0 * p2 * x;
    Mat23 dn;
    dn << inv_z, 0.0, -x * inv_z,
          0.0, inv_z, -y * inv_z;
    *J = Eigen::DiagonalMatrix<double, 2>(model.fx, model.fy) * D * dn;
  }
  return {model.fx * xd + model.cx, model.fy * yd + model.cy};
}

std::optional<Vec2> try_project(const CameraModel& model, const Vec3& p_cam, Mat23* J) {
  if (!(p_cam.z() > model.z_min)) return std::nullopt;
  return project_unchecked(model, p_cam, J);
}

Vec2 project(const CameraModel& model, const Vec3& p_cam, Mat23* J) {
  auto px = try_project(model, p_cam, J);
  if (!px) throw CheiralityError("point is behind the camera");
  return *px;
}

Vec2 unproject_normalized(const CameraModel& model, const Vec2& pixel) {
  const Vec2 target((pixel.x() - model.cx) / model.fx, (pixel.y() - model.cy) / model.fy);
  if (!model.has_distortion()) return target;

  // Newton on the distortion map in normalized coordinates.
  CameraModel unit = model;
  unit.fx = unit.fy = 1.0;
  unit.cx = unit.cy = 0.0;
  Vec2 xy = target;
  for (int it = 0; it < 20; ++it) {
    Mat23 J;
    const Vec2 f = project_unchecked(unit, Vec3(xy.x(), xy.y(), 1.0), &J) - target;
    if (f.norm() < 1e-14) break;
    xy -= J.leftCols<2>().inverse() * f;
  }
  return xy;
}

Eigen::Matrix<double, 6, 1> time_offset_jacobian(const MotionState& motion, const Vec3& gyro_unbiased) {
  Eigen::Matrix<double, 6, 1> rate;
  rate.head<3>() = motion.R_WI * gyro_unbiased;
  rate.tail<3>() = motion.v_W;
  return rate;
}

FrameKinematics FrameKinematics::Compute(const MotionState& x, const Vec3& raw_gyro, const CalibState& calib) {
  FrameKinematics k;
  const double td = calib.time_offset_increment;
  const Vec3 omega = raw_gyro - calib.b_gyro;
  const Vec3 phi = omega * td;
  k.R_WI = x.R_WI * so3_exp(phi);
  k.p_W = x.p_W + x.v_W * td;
  k.omega_W = x.R_WI * omega;
  k.v_W = x.v_W;
  k.time_offset_increment = td;
  k.rot_bias_gyro = -td * k.R_WI * right_jacobian_so3(phi);
  return k;
}

std::optional<Vec2> reprojection_residual(const FrameKinematics& kin, const Pose& T_IC, const Vec3& p_world,
                                          const Vec2& pixel, const CameraModel& model,
                                          ReprojectionJacobians* jac) {
  const Vec3 d = p_world - kin.p_W;
  const Vec3 p_imu = kin.R_WI.transpose() * d;
  const Vec3 s = p_imu - T_IC.p;
  const Vec3 p_cam = T_IC.R.transpose() * s;

  Mat23 J_pi;
  const auto px = try_project(model, p_cam, jac != nullptr ? &J_pi : nullptr);
  if (!px) return std::nullopt;

  if (jac != nullptr) {
    const Mat3 R_cw = T_IC.R.transpose() * kin.R_WI.transpose();
    const Mat23 A = J_pi * R_cw;        // d pixel / d (world-frame displacement)
    const Mat23 Ad = A * hat(d);        // d pixel / d (world-frame rotation of the IMU)
    jac->motion.block<2, 3>(0, layout::kRot) = Ad;
    jac->motion.block<2, 3>(0, layout::kVel) = -kin.time_offset_increment * A;
    jac->motion.block<2, 3>(0, layout::kPos) = -A;
    const Mat23 B = J_pi * T_IC.R.transpose();
    jac->extrinsic.leftCols<3>() = B * hat(s);
    jac->extrinsic.rightCols<3>() = -B;
    jac->time_offset = Ad * kin.omega_W - A * kin.v_W;
    jac->bias_gyro = Ad * kin.rot_bias_gyro;
  }
  return Vec2(*px - pixel);
}

Eigen::Matrix<double, 6, 19> camera_pose_jacobian(const FrameKinematics& kin, const Pose& T_IC) {
  const Mat3 R_cw = T_IC.R.transpose() * kin.R_WI.transpose();
  const Vec3 c = T_IC.R.transpose() * T_IC.p;
  // (IMU world rotation, IMU world translation) -> camera-frame perturbation
  Eigen::Matrix<double, 6, 6> P = Eigen::Matrix<double, 6, 6>::Zero();
  P.topLeftCorner<3, 3>() = -R_cw;
  P.bottomLeftCorner<3, 3>() = hat(c) * R_cw;
  P.bottomRightCorner<3, 3>() = -R_cw;

  Eigen::Matrix<double, 6, 13> E = Eigen::Matrix<double, 6, 13>::Zero();
  E.block<3, 3>(0, 0).setIdentity();
  E.block<3, 3>(3, 3) = kin.time_offset_increment * Mat3::Identity();
  E.block<3, 3>(3, 6).setIdentity();
  E.block<3, 1>(0, 9) = kin.omega_W;
  E.block<3, 1>(3, 9) = kin.v_W;
  E.block<3, 3>(0, 10) = kin.rot_bias_gyro;
  const Eigen::Matrix<double, 6, 13> PE = P * E;

  Eigen::Matrix<double, 6, 19> M = Eigen::Matrix<double, 6, 19>::Zero();
  M.leftCols<9>() = PE.leftCols<9>();
  M.block<3, 3>(0, 9) = -T_IC.R.transpose();
  M.block<3, 3>(3, 12) = -T_IC.R.transpose();
  M.col(15) = PE.col(9);
  M.rightCols<3>() = PE.rightCols<3>();
  return M;
}

Eigen::Matrix<double, 2, 6> point_jacobian(const Mat23& J_pi, const Vec3& p_cam) {
  Eigen::Matrix<double, 2, 6> B;
  B.leftCols<3>() = -J_pi * hat(p_cam);
  B.rightCols<3>() = J_pi;
  return B;
}

Pose camera_from_world(const FrameKinematics& kin, const Pose& T_IC) {
  return (Pose(kin.R_WI, kin.p_W) * T_IC).inverse();
}

Vec2 reprojection_residual(const MotionState& motion, const Vec3& raw_gyro_at_frame, const CalibState& calib,
                           const CornerObservation& obs, const BoardGeometry& board, const CameraModel& model,
                           ReprojectionJacobians* jac) {
  if (obs.camera_index < 0 || obs.camera_index > 1) throw InvalidArgument("camera index must be 0 or 1");
  const auto kin = FrameKinematics::Compute(motion, raw_gyro_at_frame, calib);
  const auto r = reprojection_residual(kin, calib.T_IC[obs.camera_index], board.corner(obs.corner_id), obs.pixel,
                                       model, jac);
  if (!r) throw CheiralityError("corner " + std::to_string(obs.corner_id) + " is behind camera " +
                                std::to_string(obs.camera_index));
  return *r;
}

}  // namespace dtcalib
