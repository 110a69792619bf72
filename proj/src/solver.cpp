#include "dtcalib/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <Eigen/Cholesky>

#include "dtcalib/errors.hpp"

namespace dtcalib {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(chunk) for chunk in [0, num_chunks). Chunk boundaries do not depend on the
/// thread count, so reductions done in chunk order are reproducible.
template <typename Fn>
void for_each_chunk(int num_chunks, int num_threads, Fn&& fn) {
  num_threads = std::min(num_threads, num_chunks);
  if (num_threads <= 1) {
    for (int c = 0; c < num_chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(num_threads));
  for (int w = 0; w < num_threads; ++w) {
    workers.emplace_back([&, w] {
      for (int c = w; c < num_chunks; c += num_threads) fn(c);
    });
  }
  for (auto& t : workers) t.join();
}

constexpr int kChunkCount = 64;

std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, int chunk, int num_chunks) {
  const std::size_t begin = n * static_cast<std::size_t>(chunk) / static_cast<std::size_t>(num_chunks);
  const std::size_t end = n * static_cast<std::size_t>(chunk + 1) / static_cast<std::size_t>(num_chunks);
  return {begin, end};
}

Vec3 gyro_at(const std::vector<ImuSample>& stream, double t) {
  const auto it = std::lower_bound(stream.begin(), stream.end(), t,
                                   [](const ImuSample& s, double v) { return s.t < v; });
  if (it == stream.begin()) return stream.front().gyro;
  if (it == stream.end()) return stream.back().gyro;
  return interpolate_sample(*(it - 1), *it, t).gyro;
}

/// Calibration columns touched by a camera factor of camera n: extrinsic (6), time offset, gyro bias.
std::array<int, 10> camera_calib_columns(int n) {
  std::array<int, 10> cols{};
  for (int k = 0; k < 6; ++k) cols[static_cast<std::size_t>(k)] = layout::extrinsic(n) + k;
  cols[6] = layout::kTimeOffset;
  for (int k = 0; k < 3; ++k) cols[static_cast<std::size_t>(7 + k)] = layout::kBiasGyro + k;
  return cols;
}

struct CameraChunkResult {
  CostBreakdown cost;
  Mat21 calib = Mat21::Zero();
  Vec21 g_calib = Vec21::Zero();
};

using Mat19 = Eigen::Matrix<double, 19, 19>;
using Vec19 = Eigen::Matrix<double, 19, 1>;
using Mat26 = Eigen::Matrix<double, 26, 26>;
using Vec26 = Eigen::Matrix<double, 26, 1>;

/// Evaluates (and optionally linearizes) the camera factors of one frame.
void camera_frame(const Problem& pb, const SolverOptions& opt, std::size_t i, CameraChunkResult& out,
                  NormalEquations* ne) {
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  const auto kin = FrameKinematics::Compute(pb.frames[i], pb.frame_gyro[i], pb.calib);
  std::array<Pose, 2> T_CW;
  for (std::size_t n = 0; n < pb.cameras.size(); ++n) T_CW[n] = camera_from_world(kin, pb.calib.T_IC[n]);
  std::array<Mat6, 2> H;
  std::array<Vec6, 2> g;
  std::array<bool, 2> touched{false, false};
  for (std::size_t n = 0; n < 2; ++n) {
    H[n].setZero();
    g[n].setZero();
  }
  Mat23 J_pi;
  for (const auto& obs : pb.observations[i]) {
    const auto n = static_cast<std::size_t>(obs.camera_index);
    const CameraModel& cam = pb.cameras[n];
    const Vec3 p_cam = T_CW[n] * pb.board.corner(obs.corner_id);
    const auto px = try_project(cam, p_cam, ne != nullptr ? &J_pi : nullptr);
    if (!px) {
      ++out.cost.cheirality_failures;
      continue;
    }
    const Vec2 r = *px - obs.pixel;
    const double inv_sigma = 1.0 / cam.pixel_sigma;
    const double s = r.squaredNorm() * inv_sigma * inv_sigma;
    out.cost.camera += opt.huber_delta > 0.0 ? huber_loss(s, opt.huber_delta) : s;
    out.cost.reprojection_sq_px += r.squaredNorm();
    out.cost.reprojection_sq_px_per_camera[n] += r.squaredNorm();
    ++out.cost.num_camera_residuals;
    ++out.cost.num_per_camera[n];
    if (ne == nullptr) continue;

    const double w = (opt.huber_delta > 0.0 ? huber_weight(std::sqrt(s), opt.huber_delta) : 1.0) *
                     inv_sigma * inv_sigma;
    const Eigen::Matrix<double, 2, 6> B = point_jacobian(J_pi, p_cam);
    H[n].noalias() += w * B.transpose() * B;
    g[n].noalias() += w * B.transpose() * r;
    touched[n] = true;
  }
  if (ne == nullptr) return;

  for (int n = 0; n < 2; ++n) {
    const auto un = static_cast<std::size_t>(n);
    if (!touched[un]) continue;
    const Eigen::Matrix<double, 6, 19> M = camera_pose_jacobian(kin, pb.calib.T_IC[un]);
    const Eigen::Matrix<double, 6, 19> HM = H[un] * M;
    const Mat19 Hf = M.transpose() * HM;
    const Vec19 gf = M.transpose() * g[un];
    const auto cols = camera_calib_columns(n);
    ne->diag[i] += Hf.topLeftCorner<9, 9>();
    ne->g_motion[i] += gf.head<9>();
    for (int a = 0; a < 10; ++a) {
      ne->border[i].col(cols[static_cast<std::size_t>(a)]) += Hf.block<9, 1>(0, 9 + a);
      out.g_calib(cols[static_cast<std::size_t>(a)]) += gf(9 + a);
      for (int b = 0; b < 10; ++b) {
        out.calib(cols[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]) += Hf(9 + a, 9 + b);
      }
    }
  }
}

struct ImuLinearization {
  Mat26 H;
  Vec26 g;
  double cost = 0.0;
  bool regularized = false;
};

ImuLinearization linearize_imu(const Problem& pb, std::size_t i) {
  ImuResidualJacobians jac;
  const auto res = imu_residual(pb.frames[i], pb.frames[i + 1], pb.calib, pb.imu_factors[i], &jac);
  Eigen::Matrix<double, 9, 26> J;
  J.leftCols<9>() = jac.first;
  J.middleCols<9>(9) = jac.second;
  J.middleCols<3>(18) = jac.bias_gyro;
  J.middleCols<3>(21) = jac.bias_accel;
  J.rightCols<2>() = jac.gravity;
  const Eigen::Matrix<double, 9, 26> Jw = res.sqrt_info * J;
  const Vec9 rw = res.sqrt_info * res.residual;
  ImuLinearization out;
  out.H.noalias() = Jw.transpose() * Jw;
  out.g.noalias() = Jw.transpose() * rw;
  out.cost = rw.squaredNorm();
  out.regularized = res.regularized;
  return out;
}

Eigen::VectorXd damping_diagonal(const NormalEquations& ne) {
  const std::size_t n = ne.diag.size();
  Eigen::VectorXd d(static_cast<Eigen::Index>(ne.dimension()));
  for (std::size_t i = 0; i < n; ++i) d.segment<9>(static_cast<Eigen::Index>(9 * i)) = ne.diag[i].diagonal();
  d.tail<21>() = ne.calib.diagonal();
  return d.cwiseMax(1e-6).cwiseMin(1e32);
}

}  // namespace

// ---------------------------------------------------------------------------

void refresh_frame_gyro(Problem& problem) {
  problem.frame_gyro.resize(problem.frames.size());
  for (std::size_t i = 0; i < problem.frames.size(); ++i) {
    problem.frame_gyro[i] = gyro_at(*problem.imu, problem.frames[i].t);
  }
}

void reintegrate_all(Problem& problem) {
  const auto& stream = *problem.imu;
  problem.imu_factors.resize(problem.frames.size() - 1);
  for (std::size_t i = 0; i + 1 < problem.frames.size(); ++i) {
    problem.imu_factors[i] = integrate(stream, problem.frames[i].t, problem.frames[i + 1].t, problem.calib.b_gyro,
                                       problem.calib.b_accel, problem.noise, problem.scheme);
  }
}

Problem build_problem(std::vector<MotionState> frames, std::vector<double> camera_times,
                      std::vector<std::vector<FrameObservation>> observations, const CalibState& calib,
                      std::vector<CameraModel> cameras, BoardGeometry board,
                      std::shared_ptr<const std::vector<ImuSample>> imu, const ImuNoiseModel& noise,
                      IntegrationScheme scheme) {
  if (frames.size() < 2) throw InvalidArgument("problem needs at least two frames");
  if (camera_times.size() != frames.size() || observations.size() != frames.size()) {
    throw InvalidArgument("frames, camera_times and observations must have the same length");
  }
  if (cameras.empty() || cameras.size() > 2) throw InvalidArgument("expected one or two cameras");
  if (!imu || imu->size() < 2) throw InvalidArgument("IMU stream is empty");
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].t > frames[i - 1].t)) throw InvalidArgument("frame times must be strictly increasing");
  }
  for (const auto& cam : cameras) cam.validate();
  noise.validate();
  for (const auto& per_frame : observations) {
    for (const auto& o : per_frame) {
      if (o.camera_index < 0 || static_cast<std::size_t>(o.camera_index) >= cameras.size()) {
        throw InvalidArgument("observation references a camera that is not configured");
      }
      if (!board.has_corner(o.corner_id)) throw InvalidArgument("observation references an unknown corner");
    }
  }

  Problem pb;
  pb.frames = std::move(frames);
  pb.camera_times = std::move(camera_times);
  pb.observations = std::move(observations);
  pb.calib = calib;
  pb.cameras = std::move(cameras);
  pb.board = std::move(board);
  pb.imu = std::move(imu);
  pb.noise = noise;
  pb.scheme = scheme;
  refresh_frame_gyro(pb);
  reintegrate_all(pb);
  return pb;
}

double huber_weight(double r_norm, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("huber delta must be positive");
  return r_norm <= delta ? 1.0 : delta / r_norm;
}

double huber_loss(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - delta * delta;
}

void NormalEquations::resize(std::size_t num_frames) {
  diag.assign(num_frames, Mat9::Zero());
  lower.assign(num_frames > 0 ? num_frames - 1 : 0, Mat9::Zero());
  border.assign(num_frames, Mat9x21::Zero());
  g_motion.assign(num_frames, Vec9::Zero());
  calib.setZero();
  g_calib.setZero();
}

Eigen::MatrixXd NormalEquations::dense_hessian() const {
  const auto n = static_cast<Eigen::Index>(diag.size());
  const Eigen::Index N = 9 * n + 21;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < n; ++i) {
    H.block<9, 9>(9 * i, 9 * i) = diag[static_cast<std::size_t>(i)];
    H.block<9, 21>(9 * i, 9 * n) = border[static_cast<std::size_t>(i)];
    H.block<21, 9>(9 * n, 9 * i) = border[static_cast<std::size_t>(i)].transpose();
    if (i + 1 < n) {
      H.block<9, 9>(9 * (i + 1), 9 * i) = lower[static_cast<std::size_t>(i)];
      H.block<9, 9>(9 * i, 9 * (i + 1)) = lower[static_cast<std::size_t>(i)].transpose();
    }
  }
  H.bottomRightCorner<21, 21>() = calib;
  return H;
}

Eigen::VectorXd NormalEquations::dense_gradient() const {
  const auto n = static_cast<Eigen::Index>(diag.size());
  Eigen::VectorXd g(9 * n + 21);
  for (Eigen::Index i = 0; i < n; ++i) g.segment<9>(9 * i) = g_motion[static_cast<std::size_t>(i)];
  g.tail<21>() = g_calib;
  return g;
}

CostBreakdown evaluate_cost(const Problem& problem, const SolverOptions& options) {
  const std::size_t n = problem.frames.size();
  const int chunks = static_cast<int>(std::min<std::size_t>(kChunkCount, n));
  std::vector<CameraChunkResult> partial(static_cast<std::size_t>(chunks));
  std::vector<double> imu_cost(n > 0 ? n - 1 : 0, 0.0);
  std::vector<char> imu_reg(imu_cost.size(), 0);

  for_each_chunk(chunks, resolve_threads(options.num_threads), [&](int c) {
    const auto [begin, end] = chunk_range(n, c, chunks);
    auto& out = partial[static_cast<std::size_t>(c)];
    for (std::size_t i = begin; i < end; ++i) {
      camera_frame(problem, options, i, out, nullptr);
      if (i + 1 < n) {
        const auto res = imu_residual(problem.frames[i], problem.frames[i + 1], problem.calib,
                                      problem.imu_factors[i]);
        imu_cost[i] = res.whitened().squaredNorm();
        imu_reg[i] = res.regularized ? 1 : 0;
      }
    }
  });

  CostBreakdown total;
  for (const auto& p : partial) {
    total.camera += p.cost.camera;
    total.reprojection_sq_px += p.cost.reprojection_sq_px;
    total.num_camera_residuals += p.cost.num_camera_residuals;
    total.cheirality_failures += p.cost.cheirality_failures;
    for (std::size_t k = 0; k < 2; ++k) {
      total.reprojection_sq_px_per_camera[k] += p.cost.reprojection_sq_px_per_camera[k];
      total.num_per_camera[k] += p.cost.num_per_camera[k];
    }
  }
  for (std::size_t i = 0; i < imu_cost.size(); ++i) {
    total.imu += imu_cost[i];
    total.regularized_imu_factors += static_cast<std::size_t>(imu_reg[i]);
  }
  return total;
}

NormalEquations build_normal_equations(const Problem& problem, const SolverOptions& options, CostBreakdown* cost) {
  const std::size_t n = problem.frames.size();
  NormalEquations ne;
  ne.resize(n);
  const int chunks = static_cast<int>(std::min<std::size_t>(kChunkCount, n));
  std::vector<CameraChunkResult> partial(static_cast<std::size_t>(chunks));
  std::vector<ImuLinearization> imu_lin(n > 0 ? n - 1 : 0);

  for_each_chunk(chunks, resolve_threads(options.num_threads), [&](int c) {
    const auto [begin, end] = chunk_range(n, c, chunks);
    auto& out = partial[static_cast<std::size_t>(c)];
    for (std::size_t i = begin; i < end; ++i) {
      camera_frame(problem, options, i, out, &ne);
      if (i + 1 < n) imu_lin[i] = linearize_imu(problem, i);
    }
  });

  CostBreakdown total;
  for (const auto& p : partial) {
    ne.calib += p.calib;
    ne.g_calib += p.g_calib;
    total.camera += p.cost.camera;
    total.reprojection_sq_px += p.cost.reprojection_sq_px;
    total.num_camera_residuals += p.cost.num_camera_residuals;
    total.cheirality_failures += p.cost.cheirality_failures;
    for (std::size_t k = 0; k < 2; ++k) {
      total.reprojection_sq_px_per_camera[k] += p.cost.reprojection_sq_px_per_camera[k];
      total.num_per_camera[k] += p.cost.num_per_camera[k];
    }
  }

  // IMU factor local layout: [x_i (9), x_{i+1} (9), b_gyro, b_accel, theta/phi (8, contiguous in calib)].
  constexpr int kImuCalib = layout::kBiasGyro;
  for (std::size_t i = 0; i < imu_lin.size(); ++i) {
    const auto& L = imu_lin[i];
    ne.diag[i] += L.H.block<9, 9>(0, 0);
    ne.diag[i + 1] += L.H.block<9, 9>(9, 9);
    ne.lower[i] += L.H.block<9, 9>(9, 0);
    ne.border[i].middleCols<8>(kImuCalib) += L.H.block<9, 8>(0, 18);
    ne.border[i + 1].middleCols<8>(kImuCalib) += L.H.block<9, 8>(9, 18);
    ne.calib.block<8, 8>(kImuCalib, kImuCalib) += L.H.block<8, 8>(18, 18);
    ne.g_motion[i] += L.g.segment<9>(0);
    ne.g_motion[i + 1] += L.g.segment<9>(9);
    ne.g_calib.segment<8>(kImuCalib) += L.g.segment<8>(18);
    total.imu += L.cost;
    total.regularized_imu_factors += L.regularized ? 1 : 0;
  }
  if (cost != nullptr) *cost = total;
  return ne;
}

bool solve_damped(const NormalEquations& ne, double lambda, Eigen::VectorXd& delta) {
  using Mat9x22 = Eigen::Matrix<double, 9, 22>;
  const std::size_t n = ne.diag.size();
  const Eigen::VectorXd D = damping_diagonal(ne);

  // Block Cholesky of the damped tridiagonal chain: A = L L^T with L block lower-bidiagonal.
  std::vector<Eigen::LLT<Mat9>> Ldiag(n);
  std::vector<Mat9> Lsub(n);  // Lsub[i] = L(i, i-1)
  for (std::size_t i = 0; i < n; ++i) {
    Mat9 A = ne.diag[i];
    A.diagonal() += lambda * D.segment<9>(static_cast<Eigen::Index>(9 * i));
    if (i > 0) {
      // L(i, i-1) = A(i, i-1) L(i-1, i-1)^{-T}
      Mat9 Lt = ne.lower[i - 1].transpose();
      Ldiag[i - 1].matrixL().solveInPlace(Lt);
      Lsub[i] = Lt.transpose();
      A.noalias() -= Lsub[i] * Lsub[i].transpose();
    }
    Ldiag[i].compute(A);
    if (Ldiag[i].info() != Eigen::Success) return false;
  }

  // Solve A Z = [B | g_m].
  std::vector<Mat9x22> Z(n);
  for (std::size_t i = 0; i < n; ++i) {
    Z[i].leftCols<21>() = ne.border[i];
    Z[i].col(21) = ne.g_motion[i];
    if (i > 0) Z[i].noalias() -= Lsub[i] * Z[i - 1];
    Ldiag[i].matrixL().solveInPlace(Z[i]);
  }
  for (std::size_t k = n; k-- > 0;) {
    if (k + 1 < n) Z[k].noalias() -= Lsub[k + 1].transpose() * Z[k + 1];
    Ldiag[k].matrixU().solveInPlace(Z[k]);
  }

  Mat21 S = ne.calib;
  S.diagonal() += lambda * D.tail<21>();
  Vec21 rhs = -ne.g_calib;
  for (std::size_t i = 0; i < n; ++i) {
    S.noalias() -= ne.border[i].transpose() * Z[i].leftCols<21>();
    rhs.noalias() += ne.border[i].transpose() * Z[i].col(21);
  }
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::LLT<Mat21> Sllt(S);
  if (Sllt.info() != Eigen::Success) return false;
  const Vec21 dc = Sllt.solve(rhs);

  delta.resize(static_cast<Eigen::Index>(ne.dimension()));
  for (std::size_t i = 0; i < n; ++i) {
    delta.segment<9>(static_cast<Eigen::Index>(9 * i)) = -Z[i].col(21) - Z[i].leftCols<21>() * dc;
  }
  delta.tail<21>() = dc;
  return delta.allFinite();
}

bool solve_damped_dense(const NormalEquations& ne, double lambda, Eigen::VectorXd& delta) {
  Eigen::MatrixXd H = ne.dense_hessian();
  H.diagonal() += lambda * damping_diagonal(ne);
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) return false;
  delta = llt.solve(-ne.dense_gradient());
  return delta.allFinite();
}

void apply_update(Problem& problem, const Eigen::VectorXd& delta) {
  const std::size_t n = problem.frames.size();
  if (static_cast<std::size_t>(delta.size()) != problem.dimension()) {
    throw InvalidArgument("update size does not match the problem dimension");
  }
  for (std::size_t i = 0; i < n; ++i) {
    apply_motion_update(problem.frames[i], delta.segment<9>(static_cast<Eigen::Index>(9 * i)));
  }
  apply_calib_update(problem.calib, delta.tail<21>());
}

namespace {

struct Snapshot {
  std::vector<MotionState> frames;
  CalibState calib;
  std::vector<PreintegratedImu> imu_factors;
};

Snapshot take_snapshot(const Problem& pb) { return {pb.frames, pb.calib, pb.imu_factors}; }

void restore(Problem& pb, Snapshot&& s) {
  pb.frames = std::move(s.frames);
  pb.calib = s.calib;
  pb.imu_factors = std::move(s.imu_factors);
}

/// Tries one damped step from the given linearization.
/// On acceptance, *relinearized holds the normal equations at the new state.
LmStep try_step(Problem& problem, const SolverOptions& options, const NormalEquations& ne, double cost_before,
                double& lambda, double& nu, NormalEquations* relinearized) {
  LmStep step;
  step.cost_before = cost_before;
  step.cost_after = cost_before;
  step.gradient_norm = std::sqrt(ne.dense_gradient().squaredNorm());

  Eigen::VectorXd delta;
  step.solved = solve_damped(ne, lambda, delta);
  if (!step.solved) {
    lambda *= nu;
    nu *= 2.0;
    return step;
  }
  step.step_norm = delta.norm();
  const Eigen::VectorXd g = ne.dense_gradient();
  const Eigen::VectorXd D = damping_diagonal(ne);
  step.predicted_decrease = -g.dot(delta) + lambda * delta.dot(D.cwiseProduct(delta));

  Snapshot saved = take_snapshot(problem);
  apply_update(problem, delta);
  reintegrate_all(problem);
  CostBreakdown trial;
  if (relinearized != nullptr) {
    *relinearized = build_normal_equations(problem, options, &trial);
  } else {
    trial = evaluate_cost(problem, options);
  }
  step.cost_after = trial.total();

  if (std::isfinite(step.cost_after) && step.cost_after < cost_before) {
    step.accepted = true;
    const double rho = step.predicted_decrease > 0.0 ? (cost_before - step.cost_after) / step.predicted_decrease : 0.0;
    const double t = 2.0 * rho - 1.0;
    lambda = std::max(lambda * std::max(1.0 / 3.0, 1.0 - t * t * t), 1e-12);
    nu = 2.0;
  } else {
    restore(problem, std::move(saved));
    step.cost_after = cost_before;
    lambda *= nu;
    nu *= 2.0;
  }
  return step;
}

}  // namespace

LmStep lm_iterate(Problem& problem, const SolverOptions& options, double& lambda, double& nu) {
  CostBreakdown cost;
  const NormalEquations ne = build_normal_equations(problem, options, &cost);
  return try_step(problem, options, ne, cost.total(), lambda, nu, nullptr);
}

InnerResult lm_optimize(Problem& problem, const SolverOptions& options, int outer_index,
                        std::vector<IterationRecord>* log) {
  InnerResult result;
  CostBreakdown cost;
  NormalEquations ne = build_normal_equations(problem, options, &cost);
  double F = cost.total();
  result.initial_cost = F;
  double lambda = options.initial_lambda;
  double nu = 2.0;

  for (int it = 0; it < options.max_inner; ++it) {
    if (ne.dense_gradient().norm() < options.gradient_tol) {
      result.converged = true;
      break;
    }
    NormalEquations next;
    const LmStep step = try_step(problem, options, ne, F, lambda, nu, &next);
    ++result.iterations;
    if (log != nullptr) {
      log->push_back({outer_index, it, step.accepted ? step.cost_after : F, lambda, step.step_norm, step.accepted,
                      0.0});
    }
    if (step.solved && step.predicted_decrease <= 1e-15 * F) {
      // Quadratic model predicts nothing left to gain.
      result.converged = true;
      break;
    }
    if (step.accepted) {
      ++result.accepted;
      const double rel = (F - step.cost_after) / std::max(F, 1e-300);
      F = step.cost_after;
      ne = std::move(next);
      if (rel < options.relative_cost_tol) {
        result.converged = true;
        break;
      }
    } else if (lambda > options.max_lambda) {
      // Whitened residuals at ~1e-9 sigma are rounding noise; nothing left to fit.
      const double rows = 2.0 * static_cast<double>(cost.num_camera_residuals) +
                          9.0 * static_cast<double>(problem.frames.size() - 1);
      if ((step.solved && step.predicted_decrease <= 1e-12 * F) || F <= 1e-18 * rows) {
        result.converged = true;
        break;
      }
      throw ConvergenceFailure("Levenberg-Marquardt damping exceeded " + std::to_string(options.max_lambda) +
                               " without an accepted step (cost " + std::to_string(F) + ")");
    }
  }
  result.final_cost = F;
  return result;
}

int outer_time_shift(Problem& problem, std::vector<std::string>* warnings) {
  const double shift = problem.calib.time_offset_increment;
  problem.calib.time_offset_increment = 0.0;
  if (shift == 0.0) return 0;
  problem.calib.time_offset += shift;
  for (auto& f : problem.frames) f.t += shift;

  const auto& stream = *problem.imu;
  std::size_t first = 0;
  std::size_t last = problem.frames.size();
  while (first < last && problem.frames[first].t < stream.front().t) ++first;
  while (last > first && problem.frames[last - 1].t > stream.back().t) --last;
  const int trimmed = static_cast<int>(first + (problem.frames.size() - last));
  if (last - first < 2) throw CoverageError("time shift leaves fewer than two frames inside the IMU stream");
  if (trimmed > 0) {
    const auto b = static_cast<std::ptrdiff_t>(first);
    const auto e = static_cast<std::ptrdiff_t>(last);
    problem.frames = {problem.frames.begin() + b, problem.frames.begin() + e};
    problem.camera_times = {problem.camera_times.begin() + b, problem.camera_times.begin() + e};
    problem.observations = {problem.observations.begin() + b, problem.observations.begin() + e};
    if (warnings != nullptr) {
      warnings->push_back("time shift moved " + std::to_string(trimmed) +
                          " boundary frame(s) outside the IMU stream; trimmed");
    }
  }
  refresh_frame_gyro(problem);
  reintegrate_all(problem);
  return trimmed;
}

void fill_statistics(const Problem& problem, const SolverOptions& options, CalibrationReport& report) {
  const CostBreakdown cost = evaluate_cost(problem, options);
  report.final_state = problem.calib;
  report.final_cost = cost.total();
  report.num_camera_residuals = cost.num_camera_residuals;
  report.reprojection_rmse_px =
      cost.num_camera_residuals > 0
          ? std::sqrt(cost.reprojection_sq_px / static_cast<double>(cost.num_camera_residuals))
          : 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    report.reprojection_rmse_px_per_camera[k] =
        cost.num_per_camera[k] > 0
            ? std::sqrt(cost.reprojection_sq_px_per_camera[k] / static_cast<double>(cost.num_per_camera[k]))
            : 0.0;
  }
  const std::size_t m = problem.imu_factors.size();
  report.imu_rmse_whitened = m > 0 ? std::sqrt(cost.imu / (9.0 * static_cast<double>(m))) : 0.0;
  report.num_cameras = static_cast<int>(problem.cameras.size());
  report.num_frames = problem.frames.size();
  report.dimension = problem.dimension();
  report.regularized_imu_factors = cost.regularized_imu_factors;
  report.dropped_observations += cost.cheirality_failures;
}

CalibrationReport solve(Problem& problem, const SolverOptions& options) {
  const auto t_start = Clock::now();
  CalibrationReport report;
  report.initial = problem.calib;
  report.initial_cost = evaluate_cost(problem, options).total();

  double t_lm = 0.0;
  double t_shift = 0.0;
  for (int outer = 0; outer < options.max_outer; ++outer) {
    const auto t0 = Clock::now();
    InnerResult inner;
    try {
      inner = lm_optimize(problem, options, outer, &report.log);
    } catch (const ConvergenceFailure& e) {
      report.converged = false;
      report.failed = true;
      report.message = e.what();
      report.outer_iterations = outer + 1;
      break;
    }
    t_lm += seconds_since(t0);
    report.inner_iterations += inner.iterations;
    report.outer_iterations = outer + 1;

    const auto t1 = Clock::now();
    const double shift = problem.calib.time_offset_increment;
    outer_time_shift(problem, &report.warnings);
    t_shift += seconds_since(t1);
    report.time_offset_shifts.push_back(shift);
    report.log.push_back({outer, -1, 0.0, 0.0, 0.0, true, shift});

    if (std::abs(shift) < options.time_offset_tol && inner.converged) {
      report.converged = true;
      break;
    }
  }
  if (!report.failed) {
    report.message = report.converged ? "converged" : "reached the outer iteration limit before convergence";
  }
  fill_statistics(problem, options, report);
  report.timings_s["lm"] = t_lm;
  report.timings_s["time_shift"] = t_shift;
  report.timings_s["optimization"] = seconds_since(t_start);
  return report;
}

}  // namespace dtcalib
