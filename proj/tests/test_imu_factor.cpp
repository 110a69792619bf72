#include <doctest.h>

#include <random>

#include "dtcalib/imu_factor.hpp"
#include "oracles.hpp"

using namespace dtcalib;

namespace {

const ImuNoiseModel kNoise{0.012, 0.14};

std::vector<ImuSample> random_stream(std::mt19937_64& rng) {
  oracle::SmoothSignal s;
  s.w_amp = oracle::random_vec(rng, 1.0);
  s.w_bias = oracle::random_vec(rng, 0.5);
  s.a_amp = oracle::random_vec(rng, 2.0);
  s.a_bias = oracle::random_vec(rng, 9.0);
  std::vector<ImuSample> out;
  for (int k = 0; k <= 40; ++k) out.push_back({0.005 * k, s.gyro(0.005 * k), s.accel(0.005 * k)});
  return out;
}

/// x_j that the preintegrated measurement predicts exactly from x_i.
MotionState predict(const MotionState& xi, const PreintegratedImu& p, const Vec3& g) {
  MotionState xj;
  xj.R_WI = xi.R_WI * p.delta_R;
  xj.v_W = xi.v_W + g * p.dt + xi.R_WI * p.delta_v;
  xj.p_W = xi.p_W + xi.v_W * p.dt + 0.5 * g * p.dt * p.dt + xi.R_WI * p.delta_p;
  return xj;
}

CalibState random_calib(std::mt19937_64& rng) {
  CalibState c;
  c.b_gyro = oracle::random_vec(rng, 0.02);
  c.b_accel = oracle::random_vec(rng, 0.2);
  std::uniform_real_distribution<double> th(-M_PI, M_PI);
  std::uniform_real_distribution<double> ph(0.3, M_PI - 0.3);
  c.theta = th(rng);
  c.phi = ph(rng);
  return c;
}

}  // namespace

TEST_CASE("consistent states give a zero residual") {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 50; ++k) {
    const auto stream = random_stream(rng);
    const CalibState c = random_calib(rng);
    const auto p = integrate(stream, 0.0123, 0.1623, c.b_gyro, c.b_accel, kNoise, IntegrationScheme::Midpoint);
    MotionState xi;
    xi.R_WI = oracle::random_rotation(rng);
    xi.v_W = oracle::random_vec(rng, 1.0);
    xi.p_W = oracle::random_vec(rng, 3.0);
    const MotionState xj = predict(xi, p, c.gravity());
    CHECK(imu_residual(xi, xj, c, p).residual.norm() < 1e-12);
  }
}

TEST_CASE("free fall") {
  CalibState c;
  c.set_gravity_direction(Vec3(0.0, -1.0, 0.0));
  std::vector<ImuSample> zero;
  for (int k = 0; k <= 20; ++k) zero.push_back({0.005 * k, Vec3::Zero(), Vec3::Zero()});
  const auto p = integrate(zero, 0.0, 0.1, Vec3::Zero(), Vec3::Zero(), kNoise, IntegrationScheme::Midpoint);
  MotionState xi;
  xi.v_W = Vec3(0.3, 1.0, 0.0);
  MotionState xj = xi;
  xj.v_W = xi.v_W + c.gravity() * 0.1;
  xj.p_W = xi.p_W + xi.v_W * 0.1 + 0.5 * c.gravity() * 0.01;
  CHECK(imu_residual(xi, xj, c, p).residual.norm() < 1e-12);
}

TEST_CASE("imu residual jacobians against finite differences") {
  std::mt19937_64 rng(32);
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const auto stream = random_stream(rng);
    const CalibState c = random_calib(rng);
    const auto scheme = k % 2 == 0 ? IntegrationScheme::Midpoint : IntegrationScheme::Euler;
    const auto p = integrate(stream, 0.0123, 0.1623, c.b_gyro, c.b_accel, kNoise, scheme);
    MotionState xi;
    xi.R_WI = oracle::random_rotation(rng);
    xi.v_W = oracle::random_vec(rng, 1.0);
    xi.p_W = oracle::random_vec(rng, 3.0);
    MotionState xj = predict(xi, p, c.gravity());
    apply_motion_update(xj, Eigen::Matrix<double, 9, 1>::Random() * 0.05);

    ImuResidualJacobians jac;
    imu_residual(xi, xj, c, p, &jac);

    const auto first = oracle::numeric_jacobian(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          MotionState x = xi;
          apply_motion_update(x, d);
          return imu_residual(x, xj, c, p).residual;
        },
        9);
    const auto second = oracle::numeric_jacobian(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          MotionState x = xj;
          apply_motion_update(x, d);
          return imu_residual(xi, x, c, p).residual;
        },
        9);
    const auto calib = oracle::numeric_jacobian(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          CalibState cc = c;
          apply_calib_update(cc, d);
          return imu_residual(xi, xj, cc, reintegrate(p, cc.b_gyro, cc.b_accel, kNoise)).residual;
        },
        21);
    worst = std::max(worst, oracle::relative_error(jac.first, first));
    worst = std::max(worst, oracle::relative_error(jac.second, second));
    worst = std::max(worst, oracle::relative_error(jac.bias_gyro, calib.middleCols<3>(layout::kBiasGyro)));
    worst = std::max(worst, oracle::relative_error(jac.bias_accel, calib.middleCols<3>(layout::kBiasAccel)));
    worst = std::max(worst, oracle::relative_error(jac.gravity, calib.middleCols<2>(layout::kGravity)));
    CHECK(calib.leftCols<13>().norm() == 0.0);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("whitening") {
  std::mt19937_64 rng(33);
  const auto stream = random_stream(rng);
  const auto p = integrate(stream, 0.0, 0.2, Vec3::Zero(), Vec3::Zero(), kNoise, IntegrationScheme::Midpoint);
  bool reg = true;
  const Mat9 W = whitening_matrix(p.cov, &reg);
  CHECK_FALSE(reg);
  CHECK((W * p.cov * W.transpose() - Mat9::Identity()).cwiseAbs().maxCoeff() < 1e-8);
  Mat9 singular = Mat9::Zero();
  singular(0, 0) = 1.0;
  whitening_matrix(singular, &reg);
  CHECK(reg);
}

TEST_CASE("gravity parameterization") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> th(-M_PI + 1e-3, M_PI - 1e-3);
  std::uniform_real_distribution<double> ph(1e-3, M_PI - 1e-3);
  for (int k = 0; k < 500; ++k) {
    const double t = th(rng);
    const double f = ph(rng);
    const Vec3 g = gravity_from_angles(9.81, t, f);
    CHECK(g.norm() == doctest::Approx(9.81).epsilon(1e-15));
    const auto back = angles_from_gravity(g);
    CHECK(std::abs(back[0] - t) < 1e-12);
    CHECK(std::abs(back[1] - f) < 1e-12);
  }
  for (const Vec3& dir : {Vec3(0.0, 0.0, -1.0), Vec3(0.0, 0.0, 1.0), Vec3(0.0, -1.0, 0.0), Vec3(0.3, 0.1, -0.9)}) {
    CalibState c;
    c.set_gravity_direction(dir);
    CHECK((c.gravity() - 9.81 * dir.normalized()).norm() < 1e-12);
    CHECK(c.phi > 0.1);
    CHECK(c.phi < M_PI - 0.1);
  }
}
