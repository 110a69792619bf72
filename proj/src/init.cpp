#include "dtcalib/init.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dtcalib/errors.hpp"

namespace dtcalib {

namespace {

/// Rotation-only midpoint integration of the gyro over [t0, t1].
Rotation integrate_rotation(std::span<const ImuSample> imu, double t0, double t1, const Vec3& bias) {
  const auto s = bracket_samples(imu, t0, t1);
  Rotation R = Rotation::Identity();
  for (std::size_t j = 0; j + 1 < s.size(); ++j) {
    R = R * so3_exp((0.5 * (s[j].gyro + s[j + 1].gyro) - bias) * (s[j + 1].t - s[j].t));
  }
  return R;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

/// Consecutive frame pairs without large gaps.
std::vector<std::size_t> regular_pairs(std::span<const double> t) {
  std::vector<double> dts;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) dts.push_back(t[k + 1] - t[k]);
  const double med = median(dts);
  std::vector<std::size_t> pairs;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    if (dts[k] > 0.0 && dts[k] <= 2.5 * med) pairs.push_back(k);
  }
  return pairs;
}

Eigen::Matrix3d normalization_transform(const std::vector<Vec2>& pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d T;
  T << s, 0.0, -s * mean.x(),
       0.0, s, -s * mean.y(),
       0.0, 0.0, 1.0;
  return T;
}

}  // namespace

std::optional<Pose> estimate_board_pose(std::span<const CornerMeasurement> corners, const BoardGeometry& board,
                                        const CameraModel& camera, std::string* diagnostic) {
  auto fail = [&](const std::string& why) -> std::optional<Pose> {
    if (diagnostic != nullptr) *diagnostic = why;
    return std::nullopt;
  };
  if (static_cast<int>(corners.size()) < kMinCornersForPose) {
    return fail("only " + std::to_string(corners.size()) + " corners (need " + std::to_string(kMinCornersForPose) +
                ")");
  }

  std::vector<Vec2> plane;
  std::vector<Vec2> image;
  plane.reserve(corners.size());
  image.reserve(corners.size());
  for (const auto& c : corners) {
    plane.push_back(board.corner(c.id).head<2>());
    image.push_back(unproject_normalized(camera, c.pixel));
  }

  // Normalized DLT: image ~ H * plane.
  const Eigen::Matrix3d Tp = normalization_transform(plane);
  const Eigen::Matrix3d Ti = normalization_transform(image);
  Eigen::Matrix<double, 9, 9> AtA = Eigen::Matrix<double, 9, 9>::Zero();
  for (std::size_t k = 0; k < plane.size(); ++k) {
    const Vec3 X = Tp * plane[k].homogeneous();
    const Vec3 x = Ti * image[k].homogeneous();
    Eigen::Matrix<double, 2, 9> rows;
    rows << -X.x(), -X.y(), -1.0, 0.0, 0.0, 0.0, x.x() * X.x(), x.x() * X.y(), x.x(),
            0.0, 0.0, 0.0, -X.x(), -X.y(), -1.0, x.y() * X.x(), x.y() * X.y(), x.y();
    AtA.noalias() += rows.transpose() * rows;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(AtA);
  const auto& ev = eig.eigenvalues();
  if (ev(1) <= 1e-10 * ev(8)) return fail("degenerate corner configuration (rank-deficient DLT)");
  const Eigen::Matrix<double, 9, 1> h = eig.eigenvectors().col(0);
  Eigen::Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d H = Ti.inverse() * Hn * Tp;

  // H ~ [r1 r2 t] for the board plane z = 0 (camera <- board).
  const double scale = 2.0 / (H.col(0).norm() + H.col(1).norm());
  Eigen::Matrix3d M = scale * H;
  if (M(2, 2) < 0.0) M = -M;
  Rotation R;
  R.col(0) = M.col(0);
  R.col(1) = M.col(1);
  R.col(2) = M.col(0).cross(M.col(1));
  R = normalize_rotation(R);
  Vec3 t = M.col(2);

  // Gauss-Newton on the reprojection error, left perturbation of (R, t).
  for (int it = 0; it < 10; ++it) {
    Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> Jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : corners) {
      const Vec3 RX = R * board.corner(c.id);
      const Vec3 pc = RX + t;
      if (!(pc.z() > camera.z_min)) return fail("corner behind camera during pose refinement");
      Mat23 Jp;
      const Vec2 r = project_unchecked(camera, pc, &Jp) - c.pixel;
      Eigen::Matrix<double, 2, 6> J;
      J.leftCols<3>() = -Jp * hat(RX);
      J.rightCols<3>() = Jp;
      JtJ.noalias() += J.transpose() * J;
      Jtr.noalias() += J.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> d = -JtJ.ldlt().solve(Jtr);
    if (!d.allFinite()) return fail("pose refinement diverged");
    R = normalize_rotation(so3_exp(d.head<3>()) * R);
    t += d.tail<3>();
    if (d.norm() < 1e-12) break;
  }
  return Pose(R, t).inverse();
}

FramePoses init_frame_poses(const std::vector<FrameDetections>& frames, const BoardGeometry& board,
                            const CameraModel& camera) {
  FramePoses out;
  out.T_WC.resize(frames.size());
  const auto n = static_cast<std::size_t>(camera.camera_index);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::string why;
    out.T_WC[i] = estimate_board_pose(frames[i].cameras[n], board, camera, &why);
    if (!out.T_WC[i]) {
      out.failed.push_back(i);
      out.diagnostics.push_back("frame " + std::to_string(frames[i].t_ns) + ": " + why);
    }
  }
  return out;
}

TimeOffsetEstimate init_time_offset(std::span<const ImuSample> imu, std::span<const double> frame_times,
                                    std::span<const Rotation> R_WC, double window) {
  TimeOffsetEstimate est;
  auto fallback = [&](const std::string& why) {
    est.offset = 0.0;
    est.fallback = true;
    est.warning = "time offset initialization fell back to 0: " + why;
    return est;
  };
  if (frame_times.size() != R_WC.size()) throw InvalidArgument("frame times and rotations differ in length");
  if (frame_times.size() < 3 || imu.size() < 3) return fallback("not enough data");
  if (frame_times.back() - frame_times.front() < 2.0) return fallback("less than 2 s of camera motion");

  std::vector<double> periods;
  for (std::size_t j = 0; j + 1 < imu.size(); ++j) periods.push_back(imu[j + 1].t - imu[j].t);
  const double h = median(periods);
  const int steps = static_cast<int>(std::ceil(window / h));
  const double reach = steps * h;

  // Pairs whose windows stay inside the stream for every candidate shift.
  std::vector<std::size_t> pairs;
  std::vector<double> cam_speed;
  for (const std::size_t k : regular_pairs(frame_times)) {
    if (frame_times[k] - reach < imu.front().t || frame_times[k + 1] + reach > imu.back().t) continue;
    const double dt = frame_times[k + 1] - frame_times[k];
    pairs.push_back(k);
    cam_speed.push_back(so3_log(normalize_rotation(R_WC[k].transpose() * R_WC[k + 1])).norm() / dt);
  }
  if (pairs.size() < 10) return fallback("too few frame pairs inside the IMU stream");

  double peak_rate = 0.0;
  for (const auto& s : imu) {
    if (s.t >= frame_times.front() - reach && s.t <= frame_times.back() + reach) {
      peak_rate = std::max(peak_rate, s.gyro.norm());
    }
  }
  if (peak_rate <= 0.2) return fallback("insufficient rotational excitation");

  const auto ncc = [&](double shift) {
    std::vector<double> g(pairs.size());
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      const std::size_t k = pairs[q];
      const double dt = frame_times[k + 1] - frame_times[k];
      g[q] = so3_log(integrate_rotation(imu, frame_times[k] + shift, frame_times[k + 1] + shift, Vec3::Zero()))
                 .norm() / dt;
    }
    const double n = static_cast<double>(g.size());
    const double mc = std::accumulate(cam_speed.begin(), cam_speed.end(), 0.0) / n;
    const double mg = std::accumulate(g.begin(), g.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t q = 0; q < g.size(); ++q) {
      sxy += (cam_speed[q] - mc) * (g[q] - mg);
      sxx += (cam_speed[q] - mc) * (cam_speed[q] - mc);
      syy += (g[q] - mg) * (g[q] - mg);
    }
    return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  };

  std::vector<double> scores(static_cast<std::size_t>(2 * steps + 1));
  for (int j = -steps; j <= steps; ++j) scores[static_cast<std::size_t>(j + steps)] = ncc(j * h);
  const auto best = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  double offset = (best - steps) * h;
  if (best > 0 && best < 2 * steps) {
    const double ym = scores[static_cast<std::size_t>(best - 1)];
    const double y0 = scores[static_cast<std::size_t>(best)];
    const double yp = scores[static_cast<std::size_t>(best + 1)];
    const double denom = ym - 2.0 * y0 + yp;
    if (denom < 0.0) offset += 0.5 * h * (ym - yp) / denom;
  }
  est.offset = offset;
  est.correlation = scores[static_cast<std::size_t>(best)];
  return est;
}

Rotation init_extrinsic_rotation(std::span<const ImuSample> imu, std::span<const double> frame_times,
                                 std::span<const Rotation> R_WC, const Vec3& gyro_bias) {
  constexpr double kMinRate = 0.2;
  constexpr std::size_t kMinPairs = 50;
  if (frame_times.size() != R_WC.size()) throw InvalidArgument("frame times and rotations differ in length");

  Mat3 cross = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  std::size_t used = 0;
  for (const std::size_t k : regular_pairs(frame_times)) {
    if (frame_times[k] < imu.front().t || frame_times[k + 1] > imu.back().t) continue;
    const double dt = frame_times[k + 1] - frame_times[k];
    const Vec3 b = so3_log(integrate_rotation(imu, frame_times[k], frame_times[k + 1], gyro_bias));
    if (b.norm() / dt <= kMinRate) continue;
    const Vec3 a = so3_log(normalize_rotation(R_WC[k].transpose() * R_WC[k + 1]));
    cross.noalias() += b * a.transpose();
    spread.noalias() += a * a.transpose();
    ++used;
  }
  if (used < kMinPairs) {
    throw DegenerateMotion("only " + std::to_string(used) + " frame intervals rotate faster than 0.2 rad/s (need " +
                           std::to_string(kMinPairs) + ")");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(spread);
  if (eig.eigenvalues()(1) < 1e-3 * eig.eigenvalues()(2)) {
    throw DegenerateMotion("rotation excites fewer than two axes; extrinsic rotation is unobservable");
  }
  // maximize sum b^T R a
  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  S(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * S * svd.matrixV().transpose();
}

GravityBiasVelocity init_gravity_biases_velocities(std::span<const ImuSample> imu,
                                                   std::span<const double> frame_times,
                                                   std::span<const Pose> T_WI, const ImuNoiseModel& noise,
                                                   double gravity_norm) {
  if (frame_times.size() != T_WI.size()) throw InvalidArgument("frame times and poses differ in length");
  if (frame_times.size() < 2) throw InvalidArgument("need at least two frames");
  if (!(gravity_norm > 0.0)) throw ConfigError("gravity norm must be positive");
  const std::size_t n = frame_times.size();
  GravityBiasVelocity out;

  // Gyro bias: dR(b) ~ Exp(J_R b) dR(0) should match R_i^T R_{i+1}.
  Mat3 JtJ = Mat3::Zero();
  Vec3 Jtr = Vec3::Zero();
  std::vector<PreintegratedImu> pre(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    pre[k] = integrate(imu, frame_times[k], frame_times[k + 1], Vec3::Zero(), Vec3::Zero(), noise,
                       IntegrationScheme::Midpoint);
    const Mat3 J = pre[k].J_bias_gyro.topRows<3>();
    const Vec3 r = so3_log(normalize_rotation(T_WI[k].R.transpose() * T_WI[k + 1].R * pre[k].delta_R.transpose()));
    JtJ.noalias() += J.transpose() * J;
    Jtr.noalias() += J.transpose() * r;
  }
  out.b_gyro = JtJ.ldlt().solve(Jtr);
  out.b_accel = Vec3::Zero();

  out.velocities.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = k == 0 ? 0 : k - 1;
    const std::size_t b = k + 1 == n ? n - 1 : k + 1;
    out.velocities[k] = (T_WI[b].p - T_WI[a].p) / (frame_times[b] - frame_times[a]);
  }

  // sum_k (v_{k+1} - v_k - R_k dv_k) = g * T
  Vec3 rotated_dv = Vec3::Zero();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const auto p = reintegrate(pre[k], out.b_gyro, Vec3::Zero(), noise);
    rotated_dv += T_WI[k].R * p.delta_v;
  }
  const double T = frame_times.back() - frame_times.front();
  const Vec3 g_dir = (out.velocities.back() - out.velocities.front() - rotated_dv) / T;
  if (!(g_dir.norm() > 0.0)) throw DegenerateMotion("could not determine the gravity direction");
  out.gravity = gravity_norm * g_dir.normalized();

  CalibState tmp;
  tmp.gravity_norm = gravity_norm;
  tmp.set_gravity_direction(out.gravity);
  out.theta = tmp.theta;
  out.phi = tmp.phi;
  out.gravity_frame = tmp.gravity_frame;
  if (std::abs(g_dir.norm() - gravity_norm) > 0.1 * gravity_norm) {
    out.warning = "estimated specific-force average has norm " + std::to_string(g_dir.norm()) +
                  " m/s^2, far from the configured gravity norm";
  }
  return out;
}

InitialGuess initialize(std::span<const ImuSample> imu, const std::vector<FrameDetections>& frames,
                        const BoardGeometry& board, const std::vector<CameraModel>& cameras,
                        const ImuNoiseModel& noise, double gravity_norm, const InitialGuessOverrides& overrides) {
  if (cameras.empty() || cameras.size() > 2) throw ConfigError("expected one or two cameras");
  if (imu.size() < 2) throw InvalidArgument("IMU stream is empty");
  InitialGuess guess;

  const FramePoses poses = init_frame_poses(frames, board, cameras[0]);
  guess.failed_frames = poses.failed;
  for (const auto& d : poses.diagnostics) guess.warnings.push_back("dropped " + d);

  std::vector<std::size_t> idx;
  std::vector<double> t_cam;
  std::vector<Rotation> R_WC;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!poses.T_WC[i]) continue;
    idx.push_back(i);
    t_cam.push_back(frames[i].t);
    R_WC.push_back(poses.T_WC[i]->R);
  }
  if (idx.size() < 3) throw DegenerateMotion("fewer than three frames have a usable board pose");

  if (overrides.time_offset) {
    guess.time_offset.offset = *overrides.time_offset;
  } else {
    guess.time_offset = init_time_offset(imu, t_cam, R_WC);
    if (guess.time_offset.fallback) guess.warnings.push_back(guess.time_offset.warning);
  }
  const double td = guess.time_offset.offset;

  // Frames whose IMU-clock time falls outside the stream cannot be constrained.
  std::vector<std::size_t> keep;
  std::vector<double> t_imu;
  std::vector<Rotation> R_keep;
  for (std::size_t q = 0; q < idx.size(); ++q) {
    const double t = t_cam[q] + td;
    if (t < imu.front().t || t > imu.back().t) {
      guess.failed_frames.push_back(idx[q]);
      guess.warnings.push_back("dropped frame " + std::to_string(frames[idx[q]].t_ns) + ": outside the IMU stream");
      continue;
    }
    keep.push_back(idx[q]);
    t_imu.push_back(t);
    R_keep.push_back(R_WC[q]);
  }
  std::sort(guess.failed_frames.begin(), guess.failed_frames.end());
  if (keep.size() < 3) throw DegenerateMotion("fewer than three frames overlap the IMU stream");

  const auto imu_poses = [&](const Pose& T_IC0) {
    std::vector<Pose> T_WI;
    T_WI.reserve(keep.size());
    const Pose T_CI = T_IC0.inverse();
    for (const std::size_t i : keep) T_WI.push_back(*poses.T_WC[i] * T_CI);
    return T_WI;
  };

  Pose T_IC0;
  GravityBiasVelocity gbv;
  if (overrides.T_IC0) {
    T_IC0 = *overrides.T_IC0;
    gbv = init_gravity_biases_velocities(imu, t_imu, imu_poses(T_IC0), noise, gravity_norm);
  } else {
    T_IC0.R = init_extrinsic_rotation(imu, t_imu, R_keep);
    gbv = init_gravity_biases_velocities(imu, t_imu, imu_poses(T_IC0), noise, gravity_norm);
    // Second pass with the gyro bias removed.
    T_IC0.R = init_extrinsic_rotation(imu, t_imu, R_keep, gbv.b_gyro);
    gbv = init_gravity_biases_velocities(imu, t_imu, imu_poses(T_IC0), noise, gravity_norm);
  }
  if (!gbv.warning.empty()) guess.warnings.push_back(gbv.warning);

  Pose T_IC1 = T_IC0;
  if (overrides.T_IC1) {
    T_IC1 = *overrides.T_IC1;
  } else if (cameras.size() == 2) {
    Mat3 R_sum = Mat3::Zero();
    Vec3 p_sum = Vec3::Zero();
    int count = 0;
    for (const std::size_t i : keep) {
      const auto T_WC1 = estimate_board_pose(frames[i].cameras[1], board, cameras[1]);
      if (!T_WC1) continue;
      const Pose rel = poses.T_WC[i]->inverse() * *T_WC1;
      R_sum += rel.R;
      p_sum += rel.p;
      ++count;
    }
    if (count > 0) {
      const Pose T_C0C1(normalize_rotation(R_sum), p_sum / count);
      T_IC1 = T_IC0 * T_C0C1;
    } else {
      guess.warnings.push_back("camera 1 never sees the board with enough corners; T_IC1 starts at T_IC0");
    }
  }

  CalibState& c = guess.calib;
  c.T_IC = {T_IC0, T_IC1};
  c.time_offset = td;
  c.time_offset_increment = 0.0;
  c.b_gyro = overrides.b_gyro.value_or(gbv.b_gyro);
  c.b_accel = overrides.b_accel.value_or(gbv.b_accel);
  c.gravity_norm = gravity_norm;
  c.set_gravity_direction(overrides.gravity.value_or(gbv.gravity));

  const auto T_WI = imu_poses(T_IC0);
  guess.frame_indices = keep;
  guess.motion.resize(keep.size());
  for (std::size_t q = 0; q < keep.size(); ++q) {
    guess.motion[q].R_WI = T_WI[q].R;
    guess.motion[q].p_W = T_WI[q].p;
    guess.motion[q].v_W = gbv.velocities[q];
    guess.motion[q].t = t_imu[q];
  }
  return guess;
}

}  // namespace dtcalib
