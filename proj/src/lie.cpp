#include "dtcalib/lie.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "dtcalib/errors.hpp"

namespace dtcalib {

namespace {

constexpr double kSmallAngle = 1e-8;

void require_finite(const Vec3& v, const char* who) {
  if (!v.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite input");
}

}  // namespace

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = R;
  T.topRightCorner<3, 1>() = p;
  return T;
}

Pose Pose::FromMatrix(const Eigen::Matrix4d& T) {
  if (T.row(3) != Eigen::RowVector4d(0.0, 0.0, 0.0, 1.0)) {
    throw InvalidArgument("Pose::FromMatrix: bottom row must be [0 0 0 1]");
  }
  Pose out(T.topLeftCorner<3, 3>(), T.topRightCorner<3, 1>());
  if (!is_rotation(out.R, 1e-6)) throw InvalidArgument("Pose::FromMatrix: rotation block is not in SO(3)");
  return out;
}

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Rotation so3_exp(const Vec3& phi) {
  require_finite(phi, "so3_exp");
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 K = hat(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * K + b * K * K;
}

Vec3 so3_log(const Rotation& R) {
  if (!R.allFinite() || !is_rotation(R, 1e-6)) throw InvalidArgument("so3_log: input is not a rotation");
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));

  if (cos_theta > 1.0 - 1e-6) {
    // theta small: w = 2 sin(theta) axis, and theta/sin(theta) ~ 1 + theta^2/6.
    const double sin_theta = 0.5 * w.norm();
    return 0.5 * (1.0 + sin_theta * sin_theta / 6.0) * w;
  }
  if (cos_theta > -0.99) {
    const double theta = std::acos(cos_theta);
    return 0.5 * theta / std::sin(theta) * w;
  }

  // Near pi: R + R^T = 2 cos(theta) I + 2 (1 - cos(theta)) a a^T.
  const double theta = std::atan2(0.5 * w.norm(), cos_theta);
  const Mat3 S = 0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity();
  int k = 0;
  S.diagonal().maxCoeff(&k);
  Vec3 axis = S.col(k) / std::sqrt(std::max(S(k, k), 1e-300));
  axis.normalize();
  // Sign from the antisymmetric part; any sign is valid at exactly pi.
  if (axis.dot(w) < 0.0) axis = -axis;
  return theta * axis;
}

Mat3 left_jacobian_so3(const Vec3& phi) {
  require_finite(phi, "left_jacobian_so3");
  const double theta2 = phi.squaredNorm();
  const Mat3 K = hat(phi);
  if (theta2 < kSmallAngle * kSmallAngle) {
    return Mat3::Identity() + 0.5 * K + K * K / 6.0;
  }
  const double theta = std::sqrt(theta2);
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Mat3::Identity() + a * K + b * K * K;
}

Mat3 left_jacobian_inverse_so3(const Vec3& phi) {
  require_finite(phi, "left_jacobian_inverse_so3");
  const double theta2 = phi.squaredNorm();
  const Mat3 K = hat(phi);
  if (theta2 < 1e-10) {
    return Mat3::Identity() - 0.5 * K + K * K / 12.0;
  }
  const double theta = std::sqrt(theta2);
  const double c = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * K + c * K * K;
}

Mat3 right_jacobian_so3(const Vec3& phi) { return left_jacobian_so3(-phi); }

Rotation normalize_rotation(const Rotation& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 U = svd.matrixU();
    U.col(2) *= -1.0;
    out = U * svd.matrixV().transpose();
  }
  return out;
}

bool is_rotation(const Rotation& R, double tol) {
  return (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

double rotation_angle_between(const Rotation& a, const Rotation& b) {
  return so3_log(normalize_rotation(a.transpose() * b)).norm();
}

}  // namespace dtcalib
