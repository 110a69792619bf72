#ifndef DTCALIB_IMU_PREINT_HPP_
#define DTCALIB_IMU_PREINT_HPP_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dtcalib/lie.hpp"

namespace dtcalib {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat93 = Eigen::Matrix<double, 9, 3>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// Raw IMU reading. t is seconds on the IMU clock.
struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   ///< rad/s
  Vec3 accel = Vec3::Zero();  ///< m/s^2
};

/// Per-sample (discrete) white-noise standard deviations.
struct ImuNoiseModel {
  double sigma_gyro = 0.0;   ///< rad/s
  double sigma_accel = 0.0;  ///< m/s^2

  /// Converts continuous-time noise densities (unit/sqrt(Hz)) for a given sample period.
  static ImuNoiseModel FromDensities(double gyro_density, double accel_density, double sample_period);
  void validate() const;
};

enum class IntegrationScheme { Euler, Midpoint };

const char* to_string(IntegrationScheme s);
IntegrationScheme scheme_from_string(const std::string& s);

/// Relative motion between two frame times, expressed in the body frame at the first one.
///
/// Error-state ordering is [dR, dv, dp] throughout; dR is a left perturbation.
struct PreintegratedImu {
  Rotation delta_R = Rotation::Identity();
  Vec3 delta_v = Vec3::Zero();
  Vec3 delta_p = Vec3::Zero();
  double t_start = 0.0;
  double t_end = 0.0;
  double dt = 0.0;
  Mat9 cov = Mat9::Zero();
  Mat93 J_bias_gyro = Mat93::Zero();
  Mat93 J_bias_accel = Mat93::Zero();
  /// Samples actually integrated, endpoints included (interpolated where needed).
  std::vector<ImuSample> samples;
  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();
  IntegrationScheme scheme = IntegrationScheme::Midpoint;
};

/// Linear interpolation of gyro and accel at time t in [s0.t, s1.t].
ImuSample interpolate_sample(const ImuSample& s0, const ImuSample& s1, double t);

/**
 * @brief Extracts the samples covering [t_start, t_end] from a time-sorted stream.
 *
 * The first and last entries sit exactly at t_start and t_end. They are
 * interpolated unless a raw sample already has that timestamp, in which case
 * the raw sample is used as-is.
 */
std::vector<ImuSample> bracket_samples(std::span<const ImuSample> stream, double t_start, double t_end);

/// Increment of one integration step; exposed for testing the recursion pieces.
struct StepJacobians {
  Mat9 F = Mat9::Identity();       ///< d f / d Delta_j
  Mat93 G_gyro0 = Mat93::Zero();   ///< d f / d raw gyro_j
  Mat93 G_gyro1 = Mat93::Zero();   ///< d f / d raw gyro_{j+1}
  Mat93 G_accel0 = Mat93::Zero();  ///< d f / d raw accel_j
  Mat93 G_accel1 = Mat93::Zero();  ///< d f / d raw accel_{j+1}
  // Bias enters with the opposite sign of the raw reading it corrects.
  Mat93 bias_gyro() const { return -(G_gyro0 + G_gyro1); }
  Mat93 bias_accel() const { return -(G_accel0 + G_accel1); }
};

struct DeltaState {
  Rotation R = Rotation::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
};

/// One step of the recursion from s0 to s1. Fills jac when non-null.
DeltaState integration_step(const DeltaState& d, const ImuSample& s0, const ImuSample& s1,
                            const Vec3& bias_gyro, const Vec3& bias_accel, IntegrationScheme scheme,
                            StepJacobians* jac = nullptr);

/// J_{j+1} = F J_j + df/db, for both biases.
void bias_jacobian_step(const StepJacobians& step, Mat93& J_gyro, Mat93& J_accel);

/// Sigma_{j+1} = F Sigma F^T + sum of the four measurement-noise injections; symmetrized.
/// Relies on the block structure of F produced by integration_step.
void propagate_covariance_step(const StepJacobians& step, const ImuNoiseModel& noise, Mat9& cov);

/**
 * @brief Preintegrates all IMU samples in [t_start, t_end].
 *
 * @p samples must be strictly increasing in time and cover the interval.
 * Throws CoverageError if they do not, FormatError on non-increasing times.
 */
PreintegratedImu integrate(std::span<const ImuSample> samples, double t_start, double t_end,
                           const Vec3& bias_gyro, const Vec3& bias_accel, const ImuNoiseModel& noise,
                           IntegrationScheme scheme);

/// Reruns the integration over the retained samples with new biases.
PreintegratedImu reintegrate(const PreintegratedImu& pre, const Vec3& bias_gyro, const Vec3& bias_accel,
                             const ImuNoiseModel& noise);

}  // namespace dtcalib

#endif  // DTCALIB_IMU_PREINT_HPP_
