// Reference implementations used only by the tests. None of them call into the
// library's own math for the quantity being checked.
#ifndef DTCALIB_TESTS_ORACLES_HPP_
#define DTCALIB_TESTS_ORACLES_HPP_

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Geometry>

namespace oracle {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Mat3 rodrigues(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, phi / angle).toRotationMatrix();
}

inline double angle_of(const Mat3& R) {
  return Eigen::AngleAxisd(R).angle();
}

/// Rotation vector through Eigen's quaternion conversion.
inline Vec3 rotation_vector(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

/// Body-frame signals of a smooth test motion.
struct SmoothSignal {
  Vec3 w_amp{0.6, -0.4, 0.5};
  Vec3 w_freq{0.7, 1.1, 0.9};
  Vec3 w_bias{0.2, 0.1, -0.3};
  Vec3 a_amp{1.2, 0.8, -1.0};
  Vec3 a_freq{0.5, 0.9, 1.3};
  Vec3 a_bias{0.3, -9.5, 0.4};

  Vec3 gyro(double t) const {
    Vec3 w;
    for (int k = 0; k < 3; ++k) w(k) = w_bias(k) + w_amp(k) * std::sin(2.0 * M_PI * w_freq(k) * t + k);
    return w;
  }
  Vec3 accel(double t) const {
    Vec3 a;
    for (int k = 0; k < 3; ++k) a(k) = a_bias(k) + a_amp(k) * std::cos(2.0 * M_PI * a_freq(k) * t + 0.5 * k);
    return a;
  }
};

struct Delta {
  Mat3 R = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
};

/**
 * Fine-step integration of continuous body signals. Rotation uses the rate at
 * each substep's midpoint; velocity and position use the specific force rotated
 * by the midpoint attitude.
 */
template <typename Signal>
Delta integrate_fine(const Signal& s, double t0, double t1, double rate_hz = 10000.0) {
  const int steps = static_cast<int>(std::ceil((t1 - t0) * rate_hz));
  const double h = (t1 - t0) / steps;
  Delta d;
  for (int k = 0; k < steps; ++k) {
    const double tm = t0 + (k + 0.5) * h;
    const Vec3 w = s.gyro(tm);
    const Mat3 R_mid = d.R * rodrigues(0.5 * h * w);
    const Vec3 a = R_mid * s.accel(tm);
    d.p += d.v * h + 0.5 * a * h * h;
    d.v += a * h;
    d.R = d.R * rodrigues(h * w);
  }
  return d;
}

/// Central finite-difference Jacobian of f around x.
inline Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                        int input_dim, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(Eigen::VectorXd::Zero(input_dim));
  Eigen::MatrixXd J(f0.size(), input_dim);
  for (int k = 0; k < input_dim; ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(input_dim);
    e(k) = h;
    J.col(k) = (f(e) - f(-e)) / (2.0 * h);
  }
  return J;
}

/// Frobenius relative error with an absolute floor on the denominator.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric, double floor = 1e-6) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), floor);
}

inline Eigen::VectorXd dense_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& rhs) {
  return H.ldlt().solve(rhs);
}

}  // namespace oracle

#endif  // DTCALIB_TESTS_ORACLES_HPP_
