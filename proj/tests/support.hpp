// Problem builders shared by the unit tests and the acceptance runner.
#ifndef DTCALIB_TESTS_SUPPORT_HPP_
#define DTCALIB_TESTS_SUPPORT_HPP_

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "dtcalib/camera.hpp"
#include "dtcalib/imu_factor.hpp"
#include "dtcalib/solver.hpp"
#include "dtcalib/synth.hpp"

namespace support {

using namespace dtcalib;

inline CalibState truth_calib(const GroundTruth& truth) {
  CalibState c;
  c.T_IC = truth.T_IC;
  c.time_offset = truth.time_offset;
  c.b_gyro = truth.b_gyro;
  c.b_accel = truth.b_accel;
  c.gravity_norm = truth.gravity.norm();
  c.set_gravity_direction(truth.gravity);
  return c;
}

struct SmallProblem {
  SynthConfig config;
  SyntheticDataset data;
  Problem problem;
};

/// A short synthetic problem whose states sit at the ground truth.
inline SmallProblem make_small_problem(std::size_t num_frames, std::uint64_t seed, double time_offset = 0.004,
                                       IntegrationScheme scheme = IntegrationScheme::Midpoint) {
  SmallProblem sp;
  sp.config = SynthConfig::EurocLike();
  sp.config.seed = seed;
  sp.config.time_offset = time_offset;
  sp.config.b_gyro = Vec3(0.002, -0.001, 0.0015);
  sp.config.b_accel = Vec3(0.03, -0.02, 0.05);
  sp.config.camera_start = 0.2123 + 0.37 * static_cast<double>(seed % 7);
  sp.config.duration = sp.config.camera_start + 0.05 * static_cast<double>(num_frames) + 0.6;
  sp.data = simulate(sp.config);

  std::vector<MotionState> frames;
  std::vector<double> camera_times;
  std::vector<std::vector<FrameObservation>> observations;
  for (std::size_t i = 0; i < num_frames && i < sp.data.frames.size(); ++i) {
    const auto& f = sp.data.frames[i];
    const double t = f.t + sp.data.truth.time_offset;
    const TrajectorySample s = analytic_trajectory(t, sp.config.profile);
    MotionState x;
    x.R_WI = s.T_WI.R;
    x.p_W = s.T_WI.p;
    x.v_W = s.v_W;
    x.t = t;
    frames.push_back(x);
    camera_times.push_back(f.t);
    std::vector<FrameObservation> obs;
    for (int n = 0; n < 2; ++n) {
      for (const auto& c : f.cameras[static_cast<std::size_t>(n)]) obs.push_back({n, c.id, c.pixel});
    }
    observations.push_back(std::move(obs));
  }
  auto stream = std::make_shared<const std::vector<ImuSample>>(sp.data.imu.samples);
  const auto noise = ImuNoiseModel::FromDensities(1.6968e-4, 2.0e-3, 1.0 / sp.config.imu_rate);
  std::vector<CameraModel> cameras = sp.config.cameras;
  for (auto& c : cameras) c.pixel_sigma = 1.0;
  sp.problem = build_problem(frames, camera_times, observations, truth_calib(sp.data.truth), cameras,
                             sp.config.board, stream, noise, scheme);
  return sp;
}

/// Random tangent-space perturbation of every state, biases and gravity included.
inline void perturb(Problem& pb, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd delta(static_cast<Eigen::Index>(pb.dimension()));
  for (Eigen::Index k = 0; k < delta.size(); ++k) delta(k) = scale * n(rng);
  delta.tail<21>().segment<1>(layout::kTimeOffset) *= 0.01;
  delta.tail<21>().segment<3>(layout::kBiasGyro) *= 0.01;
  delta.tail<21>().segment<3>(layout::kBiasAccel) *= 0.1;
  apply_update(pb, delta);
  reintegrate_all(pb);
}

/// Whitening of every IMU factor at the current state, held fixed for differentiation.
inline std::vector<Mat9> imu_whiteners(const Problem& pb) {
  std::vector<Mat9> out;
  for (std::size_t i = 0; i + 1 < pb.frames.size(); ++i) {
    out.push_back(imu_residual(pb.frames[i], pb.frames[i + 1], pb.calib, pb.imu_factors[i]).sqrt_info);
  }
  return out;
}

/// Whitened residual vector without a robust kernel: camera terms first, then IMU terms.
inline Eigen::VectorXd stacked_residual(const Problem& pb, const std::vector<Mat9>& whiteners) {
  std::vector<double> r;
  for (std::size_t i = 0; i < pb.frames.size(); ++i) {
    for (const auto& o : pb.observations[i]) {
      const CameraModel& cam = pb.cameras[static_cast<std::size_t>(o.camera_index)];
      const CornerObservation obs{static_cast<int>(i), o.camera_index, o.corner_id, o.pixel};
      const Vec2 e = reprojection_residual(pb.frames[i], pb.frame_gyro[i], pb.calib, obs, pb.board, cam) /
                     cam.pixel_sigma;
      r.push_back(e.x());
      r.push_back(e.y());
    }
  }
  for (std::size_t i = 0; i + 1 < pb.frames.size(); ++i) {
    const Vec9 e = whiteners[i] * imu_residual(pb.frames[i], pb.frames[i + 1], pb.calib, pb.imu_factors[i]).residual;
    r.insert(r.end(), e.data(), e.data() + 9);
  }
  return Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
}

/// Jacobian of stacked_residual by central differences through the retraction and reintegration.
inline Eigen::MatrixXd numeric_problem_jacobian(const Problem& pb, double h = 1e-6) {
  const auto W = imu_whiteners(pb);
  const auto N = static_cast<Eigen::Index>(pb.dimension());
  const Eigen::VectorXd r0 = stacked_residual(pb, W);
  Eigen::MatrixXd J(r0.size(), N);
  for (Eigen::Index k = 0; k < N; ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(N);
    e(k) = h;
    Problem plus = pb;
    apply_update(plus, e);
    reintegrate_all(plus);
    Problem minus = pb;
    apply_update(minus, -e);
    reintegrate_all(minus);
    J.col(k) = (stacked_residual(plus, W) - stacked_residual(minus, W)) / (2.0 * h);
  }
  return J;
}

/// Random bordered block-tridiagonal normal equations from random factor Jacobians.
inline NormalEquations random_normal_equations(std::size_t num_frames, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const auto rnd = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
  };
  NormalEquations ne;
  ne.resize(num_frames);
  for (std::size_t i = 0; i < num_frames; ++i) {
    // Per-frame factor touching x_i and the whole border.
    const Eigen::MatrixXd J = rnd(12, 30);
    const Eigen::VectorXd r = rnd(12, 1);
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    ne.diag[i] += H.topLeftCorner(9, 9);
    ne.border[i] += H.block(0, 9, 9, 21);
    ne.calib += H.bottomRightCorner(21, 21);
    ne.g_motion[i] += g.head(9);
    ne.g_calib += g.tail(21);
    if (i + 1 == num_frames) continue;
    // Chain factor touching x_i, x_{i+1} and a slice of the border.
    const Eigen::MatrixXd K = rnd(9, 26);
    const Eigen::VectorXd s = rnd(9, 1);
    const Eigen::MatrixXd HK = K.transpose() * K;
    const Eigen::VectorXd gK = K.transpose() * s;
    ne.diag[i] += HK.block(0, 0, 9, 9);
    ne.diag[i + 1] += HK.block(9, 9, 9, 9);
    ne.lower[i] += HK.block(9, 0, 9, 9);
    ne.border[i].middleCols(13, 8) += HK.block(0, 18, 9, 8);
    ne.border[i + 1].middleCols(13, 8) += HK.block(9, 18, 9, 8);
    ne.calib.block(13, 13, 8, 8) += HK.block(18, 18, 8, 8);
    ne.g_motion[i] += gK.segment(0, 9);
    ne.g_motion[i + 1] += gK.segment(9, 9);
    ne.g_calib.segment(13, 8) += gK.segment(18, 8);
  }
  return ne;
}

}  // namespace support

#endif  // DTCALIB_TESTS_SUPPORT_HPP_
