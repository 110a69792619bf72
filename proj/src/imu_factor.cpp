#include "dtcalib/imu_factor.hpp"

#include <Eigen/Cholesky>

namespace dtcalib {

Mat9 whitening_matrix(const Mat9& cov, bool* regularized) {
  Eigen::LLT<Mat9> llt(cov);
  bool bumped = false;
  if (llt.info() != Eigen::Success) {
    llt.compute(cov + 1e-12 * Mat9::Identity());
    bumped = true;
  }
  if (regularized != nullptr) *regularized = bumped;
  Mat9 L_inv = Mat9::Identity();
  llt.matrixL().solveInPlace(L_inv);
  return L_inv;
}

ImuResidual imu_residual(const MotionState& x_i, const MotionState& x_j, const CalibState& calib,
                         const PreintegratedImu& preint, ImuResidualJacobians* jac) {
  using namespace layout;
  const double dt = preint.dt;
  const Vec3 g = calib.gravity();
  const Mat3 RiT = x_i.R_WI.transpose();

  const Mat3 A = preint.delta_R * x_j.R_WI.transpose();
  const Vec3 r_rot = so3_log(normalize_rotation(A * x_i.R_WI));
  const Vec3 w_v = x_j.v_W - x_i.v_W - g * dt;
  const Vec3 w_p = x_j.p_W - x_i.p_W - x_i.v_W * dt - 0.5 * g * dt * dt;

  ImuResidual out;
  out.residual.segment<3>(0) = r_rot;
  out.residual.segment<3>(3) = RiT * w_v - preint.delta_v;
  out.residual.segment<3>(6) = RiT * w_p - preint.delta_p;
  out.sqrt_info = whitening_matrix(preint.cov, &out.regularized);

  if (jac != nullptr) {
    const Mat3 Jinv = left_jacobian_inverse_so3(r_rot);
    const Mat3 JA = Jinv * A;

    jac->first.setZero();
    jac->first.block<3, 3>(0, kRot) = JA;
    jac->first.block<3, 3>(3, kRot) = RiT * hat(w_v);
    jac->first.block<3, 3>(3, kVel) = -RiT;
    jac->first.block<3, 3>(6, kRot) = RiT * hat(w_p);
    jac->first.block<3, 3>(6, kVel) = -dt * RiT;
    jac->first.block<3, 3>(6, kPos) = -RiT;

    jac->second.setZero();
    jac->second.block<3, 3>(0, kRot) = -JA;
    jac->second.block<3, 3>(3, kVel) = RiT;
    jac->second.block<3, 3>(6, kPos) = RiT;

    jac->bias_gyro.topRows<3>() = Jinv * preint.J_bias_gyro.topRows<3>();
    jac->bias_gyro.bottomRows<6>() = -preint.J_bias_gyro.bottomRows<6>();
    jac->bias_accel.topRows<3>() = Jinv * preint.J_bias_accel.topRows<3>();
    jac->bias_accel.bottomRows<6>() = -preint.J_bias_accel.bottomRows<6>();

    const Eigen::Matrix<double, 3, 2> dg = calib.gravity_jacobian();
    jac->gravity.topRows<3>().setZero();
    jac->gravity.middleRows<3>(3) = -dt * RiT * dg;
    jac->gravity.bottomRows<3>() = -0.5 * dt * dt * RiT * dg;
  }
  return out;
}

}  // namespace dtcalib
