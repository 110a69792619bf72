#include <doctest.h>

#include <random>

#include "dtcalib/errors.hpp"
#include "dtcalib/lie.hpp"
#include "oracles.hpp"

using namespace dtcalib;

TEST_CASE("so3_exp closed cases") {
  CHECK(so3_exp(Vec3::Zero()).isApprox(Mat3::Identity(), 0.0));
  const Mat3 half = so3_exp(Vec3(M_PI, 0.0, 0.0));
  CHECK((half - Vec3(1.0, -1.0, -1.0).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(so3_exp(Vec3(std::nan(""), 0.0, 0.0)), InvalidArgument);
}

TEST_CASE("so3_exp matches Rodrigues") {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 phi = oracle::random_vec(rng, 3.0);
    worst = std::max(worst, (so3_exp(phi) - oracle::rodrigues(phi)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
  const Vec3 tiny(1e-10, -2e-10, 3e-10);
  CHECK((so3_exp(tiny) - oracle::rodrigues(tiny)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("so3_log closed cases") {
  CHECK(so3_log(Mat3::Identity()).norm() == 0.0);
  const Vec3 w = so3_log(Vec3(1.0, -1.0, -1.0).asDiagonal().toDenseMatrix());
  CHECK(w.norm() == doctest::Approx(M_PI).epsilon(1e-12));
  CHECK(std::abs(std::abs(w.x()) - M_PI) < 1e-12);
  Mat3 bad = Mat3::Identity();
  bad(0, 1) = 0.1;
  CHECK_THROWS_AS(so3_log(bad), InvalidArgument);
}

TEST_CASE("exp and log round trip") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> angle(0.0, M_PI - 1e-3);
  double worst_vec = 0.0;
  double worst_rot = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Vec3 axis = oracle::random_vec(rng, 1.0).normalized();
    const Vec3 phi = angle(rng) * axis;
    worst_vec = std::max(worst_vec, (so3_log(so3_exp(phi)) - phi).norm());
    const Mat3 R = oracle::random_rotation(rng);
    worst_rot = std::max(worst_rot, (so3_exp(so3_log(R)) - R).cwiseAbs().maxCoeff());
  }
  CHECK(worst_vec < 1e-9);
  CHECK(worst_rot < 1e-9);
}

TEST_CASE("log near pi") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const Vec3 axis = oracle::random_vec(rng, 1.0).normalized();
    const Vec3 phi = (M_PI - 1e-7) * axis;
    const Vec3 back = so3_log(so3_exp(phi));
    CHECK((so3_exp(back) - so3_exp(phi)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(back.norm() == doctest::Approx(phi.norm()).epsilon(1e-8));
  }
}

TEST_CASE("left jacobian against finite differences") {
  const auto fd = [](const Vec3& phi) {
    Mat3 J;
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e(k) = h;
      const Vec3 plus = oracle::rotation_vector(oracle::rodrigues(phi + e) * oracle::rodrigues(phi).transpose());
      const Vec3 minus = oracle::rotation_vector(oracle::rodrigues(phi - e) * oracle::rodrigues(phi).transpose());
      J.col(k) = (plus - minus) / (2.0 * h);
    }
    return J;
  };
  CHECK(left_jacobian_so3(Vec3::Zero()).isApprox(Mat3::Identity(), 0.0));
  for (const Vec3& phi : {Vec3(0.1, 0.0, 0.0), Vec3(M_PI / 2, 0.0, 0.0), Vec3(0.3, -1.2, 0.7)}) {
    CHECK((left_jacobian_so3(phi) - fd(phi)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((left_jacobian_so3(phi) * left_jacobian_inverse_so3(phi) - Mat3::Identity()).norm() < 1e-12);
    CHECK((right_jacobian_so3(phi) - left_jacobian_so3(-phi)).norm() == 0.0);
  }
}

TEST_CASE("composition drift") {
  std::mt19937_64 rng(4);
  Mat3 R = Mat3::Identity();
  for (int k = 0; k < 10000; ++k) R = R * so3_exp(oracle::random_vec(rng, 0.5));
  CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(is_rotation(normalize_rotation(R), 1e-12));
}

TEST_CASE("pose algebra") {
  std::mt19937_64 rng(5);
  const Pose A(oracle::random_rotation(rng), oracle::random_vec(rng, 2.0));
  const Pose B(oracle::random_rotation(rng), oracle::random_vec(rng, 2.0));
  const Vec3 x = oracle::random_vec(rng, 1.0);
  CHECK(((A * B) * x - A * (B * x)).norm() < 1e-14);
  CHECK(((A * A.inverse()) * x - x).norm() < 1e-14);
  const Pose C = Pose::FromMatrix(A.matrix());
  CHECK(C.R == A.R);
  CHECK(C.p == A.p);
  Eigen::Matrix4d bad = A.matrix();
  bad(3, 0) = 0.5;
  CHECK_THROWS(Pose::FromMatrix(bad));
  CHECK(rotation_angle_between(A.R, so3_exp(Vec3(0.0, 0.0, 0.3)) * A.R) == doctest::Approx(0.3).epsilon(1e-12));
}
