#include <doctest.h>

#include "dtcalib/errors.hpp"
#include "dtcalib/imu_preint.hpp"
#include "dtcalib/synth.hpp"
#include "oracles.hpp"

using namespace dtcalib;

TEST_CASE("static profile") {
  TrajectoryProfile p;
  p.R0 = so3_exp(Vec3(0.2, -0.1, 0.4));
  p.p0 = Vec3(1.0, 2.0, 3.0);
  for (double t : {0.0, 1.3, 7.7}) {
    const auto s = analytic_trajectory(t, p);
    CHECK(s.T_WI.R == p.R0);
    CHECK(s.T_WI.p == p.p0);
    CHECK(s.gyro.norm() == 0.0);
    CHECK((s.accel + p.R0.transpose() * p.gravity).norm() < 1e-14);
  }
}

TEST_CASE("translation-only profile") {
  TrajectoryProfile p;
  p.trans_amplitude = Vec3(0.1, 0.2, 0.3);
  p.trans_frequency = Vec3(0.5, 0.7, 1.1);
  p.trans_phase = Vec3(0.1, 0.2, 0.3);
  // Five-point stencil: truncation ~h^4, well below the tolerance at this step.
  const double h = 5e-4;
  const auto d5 = [h](const auto& f, double t) -> Vec3 {
    return ((f(t - 2.0 * h) - f(t + 2.0 * h)) + 8.0 * (f(t + h) - f(t - h))) / (12.0 * h);
  };
  const auto pos = [&](double t) -> Vec3 { return analytic_trajectory(t, p).T_WI.p; };
  const auto vel = [&](double t) -> Vec3 { return analytic_trajectory(t, p).v_W; };
  for (double t : {0.3, 2.1, 5.5}) {
    const auto s = analytic_trajectory(t, p);
    CHECK(s.gyro.norm() == 0.0);
    const Vec3 v_fd = d5(pos, t);
    const Vec3 a_fd = d5(vel, t);
    CHECK((v_fd - s.v_W).norm() < 1e-10);
    CHECK((a_fd - s.a_W).norm() < 1e-10);
    CHECK((s.accel - s.T_WI.R.transpose() * (a_fd - p.gravity)).norm() < 1e-10);
  }
}

TEST_CASE("full profile derivatives") {
  const auto p = SynthConfig::EurocLike().profile;
  const double h = 1e-5;
  for (double t : {0.4, 3.3, 17.9, 42.0}) {
    const auto s = analytic_trajectory(t, p);
    const auto a = analytic_trajectory(t - h, p);
    const auto b = analytic_trajectory(t + h, p);
    const Vec3 w_fd = oracle::rotation_vector(a.T_WI.R.transpose() * b.T_WI.R) / (2.0 * h);
    CHECK((w_fd - s.gyro).norm() < 1e-8);
    CHECK(((b.T_WI.p - a.T_WI.p) / (2.0 * h) - s.v_W).norm() < 1e-8);
  }
}

TEST_CASE("determinism and visibility") {
  SynthConfig c = SynthConfig::EurocLike();
  c.duration = 5.0;
  c.seed = 77;
  c.time_offset = 0.02;
  const auto a = simulate(c);
  const auto b = simulate(c);
  REQUIRE(a.frames.size() == b.frames.size());
  CHECK(a.imu.t_ns == b.imu.t_ns);
  for (std::size_t k = 0; k < a.imu.samples.size(); ++k) {
    CHECK(a.imu.samples[k].gyro == b.imu.samples[k].gyro);
    CHECK(a.imu.samples[k].accel == b.imu.samples[k].accel);
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i].t_ns == b.frames[i].t_ns);
    const auto T_WI = analytic_trajectory(a.frames[i].t + c.time_offset, c.profile).T_WI;
    for (int n = 0; n < 2; ++n) {
      const auto un = static_cast<std::size_t>(n);
      const Pose T_CW = (T_WI * c.T_IC[un]).inverse();
      for (std::size_t k = 0; k < a.frames[i].cameras[un].size(); ++k) {
        const auto& m = a.frames[i].cameras[un][k];
        CHECK(m.pixel == b.frames[i].cameras[un][k].pixel);
        CHECK(c.cameras[un].in_bounds(m.pixel));
        CHECK((T_CW * c.board.corner(m.id)).z() > 0.0);
        ++total;
      }
    }
  }
  CHECK(total > 1000);
  CHECK(a.truth.time_offset == 0.02);

  c.seed = 78;
  const auto other = simulate(c);
  CHECK(other.imu.samples[10].gyro != a.imu.samples[10].gyro);
}

TEST_CASE("noiseless stream integrates to the analytic motion") {
  SynthConfig c = SynthConfig::EurocLike();
  c.duration = 3.0;
  c.gyro_noise_density = 0.0;
  c.accel_noise_density = 0.0;
  const auto error_at = [&](double rate) {
    c.imu_rate = rate;
    const auto d = simulate(c);
    const ImuNoiseModel noise{1e-3, 1e-2};
    double worst = 0.0;
    for (double t0 : {0.5, 1.2, 2.0}) {
      const double t1 = t0 + 0.05;
      const auto pre = integrate(d.imu.samples, t0, t1, Vec3::Zero(), Vec3::Zero(), noise,
                                 IntegrationScheme::Midpoint);
      const auto a = analytic_trajectory(t0, c.profile);
      const auto b = analytic_trajectory(t1, c.profile);
      const Vec3 dp = a.T_WI.R.transpose() * (b.T_WI.p - a.T_WI.p - a.v_W * 0.05 - 0.5 * c.profile.gravity * 0.0025);
      worst = std::max(worst, (pre.delta_p - dp).norm());
    }
    return worst;
  };
  const double e200 = error_at(200.0);
  const double e400 = error_at(400.0);
  CHECK(e200 < 1e-5);
  CHECK(e200 / e400 == doctest::Approx(4.0).epsilon(0.3));
}

TEST_CASE("invalid configurations") {
  SynthConfig c = SynthConfig::EurocLike();
  c.imu_rate = 30.0;
  CHECK_THROWS_AS(simulate(c), ConfigError);
  c = SynthConfig::EurocLike();
  c.num_cameras = 3;
  CHECK_THROWS_AS(simulate(c), ConfigError);
  c = SynthConfig::EurocLike();
  c.duration = 2.0;
  c.T_IC[0] = Pose(so3_exp(Vec3(M_PI, 0.0, 0.0)) * c.T_IC[0].R, c.T_IC[0].p);
  c.T_IC[1] = c.T_IC[0];
  CHECK_THROWS_AS(simulate(c), CoverageError);
}
