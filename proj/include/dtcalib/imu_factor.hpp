#ifndef DTCALIB_IMU_FACTOR_HPP_
#define DTCALIB_IMU_FACTOR_HPP_

#include <Eigen/Core>

#include "dtcalib/imu_preint.hpp"
#include "dtcalib/state.hpp"

namespace dtcalib {

struct ImuResidualJacobians {
  Mat9 first;   ///< w.r.t. the motion state at t_i, [dR, dv, dp]
  Mat9 second;  ///< w.r.t. the motion state at t_{i+1}
  Mat93 bias_gyro;
  Mat93 bias_accel;
  Eigen::Matrix<double, 9, 2> gravity;  ///< w.r.t. [theta, phi]
};

struct ImuResidual {
  Vec9 residual;       ///< [r_dR, r_dv, r_dp], not whitened
  Mat9 sqrt_info;      ///< L^{-1} with cov = L L^T; whitened residual = sqrt_info * residual
  bool regularized = false;  ///< covariance needed a diagonal bump to factor

  Vec9 whitened() const { return sqrt_info * residual; }
};

/// Inverse Cholesky factor of a preintegration covariance; bumps the diagonal by 1e-12 if needed.
Mat9 whitening_matrix(const Mat9& cov, bool* regularized = nullptr);

/**
 * Residual between two consecutive motion states and their preintegrated IMU
 * measurement, with gravity from the spherical parameterization:
 *
 *   r_dR = Log(dR * R_j^T * R_i)
 *   r_dv = R_i^T (v_j - v_i - g dt) - dv
 *   r_dp = R_i^T (p_j - p_i - v_i dt - g dt^2 / 2) - dp
 *
 * Bias Jacobians come from the preintegration recursion evaluated at the
 * biases the measurement was integrated with.
 */
ImuResidual imu_residual(const MotionState& x_i, const MotionState& x_j, const CalibState& calib,
                         const PreintegratedImu& preint, ImuResidualJacobians* jac = nullptr);

}  // namespace dtcalib

#endif  // DTCALIB_IMU_FACTOR_HPP_
