#ifndef DTCALIB_SOLVER_HPP_
#define DTCALIB_SOLVER_HPP_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dtcalib/board.hpp"
#include "dtcalib/camera.hpp"
#include "dtcalib/imu_factor.hpp"
#include "dtcalib/imu_preint.hpp"
#include "dtcalib/state.hpp"

namespace dtcalib {

using Mat21 = Eigen::Matrix<double, 21, 21>;
using Vec21 = Eigen::Matrix<double, 21, 1>;
using Mat9x21 = Eigen::Matrix<double, 9, 21>;

struct SolverOptions {
  IntegrationScheme scheme = IntegrationScheme::Midpoint;
  double huber_delta = 1.0;  ///< on the whitened reprojection residual norm; <= 0 disables the kernel
  int max_inner = 50;
  int max_outer = 10;
  double gradient_tol = 1e-8;
  double relative_cost_tol = 1e-10;
  double time_offset_tol = 1e-6;  ///< seconds
  double initial_lambda = 1e-8;
  double max_lambda = 1e12;
  int num_threads = 0;  ///< 0 = hardware concurrency
};

/// One corner seen by one camera in one frame.
struct FrameObservation {
  int camera_index = 0;
  int corner_id = 0;
  Vec2 pixel = Vec2::Zero();
};

/**
 * @brief Full-batch calibration problem.
 *
 * frames[i] and frames[i + 1] are linked by imu_factors[i], which always spans
 * exactly [frames[i].t, frames[i + 1].t] on the IMU clock.
 */
struct Problem {
  std::vector<MotionState> frames;
  std::vector<double> camera_times;  ///< original camera-clock frame stamps
  std::vector<std::vector<FrameObservation>> observations;  ///< per frame
  CalibState calib;
  std::vector<PreintegratedImu> imu_factors;
  std::vector<CameraModel> cameras;
  BoardGeometry board;
  std::shared_ptr<const std::vector<ImuSample>> imu;
  ImuNoiseModel noise;
  IntegrationScheme scheme = IntegrationScheme::Midpoint;
  /// Raw gyro interpolated at each frame time; refreshed whenever frame times move.
  std::vector<Vec3> frame_gyro;

  std::size_t num_frames() const { return frames.size(); }
  std::size_t dimension() const { return state_dimension(frames.size()); }
};

/// Builds the problem and preintegrates every interval at the current biases.
Problem build_problem(std::vector<MotionState> frames, std::vector<double> camera_times,
                      std::vector<std::vector<FrameObservation>> observations, const CalibState& calib,
                      std::vector<CameraModel> cameras, BoardGeometry board,
                      std::shared_ptr<const std::vector<ImuSample>> imu, const ImuNoiseModel& noise,
                      IntegrationScheme scheme);

/// Re-preintegrates all intervals over the current frame times and biases.
void reintegrate_all(Problem& problem);
void refresh_frame_gyro(Problem& problem);

/// Huber IRLS weight: 1 inside delta, delta / r_norm outside.
double huber_weight(double r_norm, double delta);
/// Huber loss of a squared norm s: s inside delta^2, 2 delta sqrt(s) - delta^2 outside.
double huber_loss(double squared_norm, double delta);

struct CostBreakdown {
  double camera = 0.0;  ///< robustified, whitened
  double imu = 0.0;     ///< whitened
  double reprojection_sq_px = 0.0;  ///< sum of squared pixel residual norms (no kernel, no whitening)
  std::size_t num_camera_residuals = 0;
  std::array<double, 2> reprojection_sq_px_per_camera{0.0, 0.0};
  std::array<std::size_t, 2> num_per_camera{0, 0};
  std::size_t cheirality_failures = 0;
  std::size_t regularized_imu_factors = 0;
  double total() const { return camera + imu; }
};

/// Objective value without linearization.
CostBreakdown evaluate_cost(const Problem& problem, const SolverOptions& options);

/**
 * @brief Gauss-Newton normal equations H = J^T W J, g = J^T W r.
 *
 * Motion blocks form a block-tridiagonal matrix (diag[i], lower[i] = H(i+1, i));
 * every block couples to the dense 21-dimensional calibration border.
 */
struct NormalEquations {
  std::vector<Mat9> diag;
  std::vector<Mat9> lower;
  std::vector<Mat9x21> border;
  Mat21 calib = Mat21::Zero();
  std::vector<Vec9> g_motion;
  Vec21 g_calib = Vec21::Zero();

  void resize(std::size_t num_frames);
  std::size_t dimension() const { return 9 * diag.size() + 21; }
  Eigen::MatrixXd dense_hessian() const;
  Eigen::VectorXd dense_gradient() const;
};

NormalEquations build_normal_equations(const Problem& problem, const SolverOptions& options,
                                       CostBreakdown* cost = nullptr);

/// Solves (H + lambda D) delta = -g, D = diag(H) clamped to [1e-6, 1e32].
/// Calibration border eliminated by Schur complement, motion chain by block-tridiagonal Cholesky.
/// Returns false if the damped system is not positive definite.
bool solve_damped(const NormalEquations& ne, double lambda, Eigen::VectorXd& delta);

/// Dense reference solve of the same damped system.
bool solve_damped_dense(const NormalEquations& ne, double lambda, Eigen::VectorXd& delta);

/// Applies a full tangent step (motion blocks first, then calibration).
void apply_update(Problem& problem, const Eigen::VectorXd& delta);

struct IterationRecord {
  int outer = 0;
  int inner = 0;
  double cost = 0.0;
  double lambda = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
  double time_offset_shift = 0.0;  ///< nonzero only on outer-shift records
};

struct InnerResult {
  int iterations = 0;
  int accepted = 0;
  bool converged = false;
  double initial_cost = 0.0;
  double final_cost = 0.0;
};

/// Levenberg-Marquardt on the current windows. Throws ConvergenceFailure when damping saturates.
InnerResult lm_optimize(Problem& problem, const SolverOptions& options, int outer_index,
                        std::vector<IterationRecord>* log = nullptr);

/// One Levenberg-Marquardt iteration; lambda/nu are updated in place. Returns true if the step was accepted.
struct LmStep {
  bool accepted = false;
  bool solved = false;
  double cost_before = 0.0;
  double cost_after = 0.0;
  double step_norm = 0.0;
  double gradient_norm = 0.0;
  double predicted_decrease = 0.0;
};
LmStep lm_iterate(Problem& problem, const SolverOptions& options, double& lambda, double& nu);

/**
 * @brief Folds the time-offset increment into the frame times and reintegrates.
 *
 * t_i <- t_i + dt_d for every frame, cumulative offset updated, increment reset
 * to zero, motion states carried over. Boundary frames whose shifted window
 * leaves the IMU stream are trimmed; their count is returned.
 */
int outer_time_shift(Problem& problem, std::vector<std::string>* warnings = nullptr);

struct CalibrationReport {
  CalibState initial;
  CalibState final_state;
  bool converged = false;
  bool failed = false;  ///< damping saturated; statistics describe the last accepted state
  std::string message;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double reprojection_rmse_px = 0.0;
  std::array<double, 2> reprojection_rmse_px_per_camera{0.0, 0.0};
  double imu_rmse_whitened = 0.0;
  int num_cameras = 0;
  std::size_t num_frames = 0;
  std::size_t dimension = 0;
  std::size_t num_camera_residuals = 0;
  int inner_iterations = 0;
  int outer_iterations = 0;
  std::vector<IterationRecord> log;
  std::vector<double> time_offset_shifts;
  std::vector<double> dropped_frame_times;  ///< camera-clock stamps of frames removed from the problem
  std::size_t dropped_observations = 0;
  std::size_t regularized_imu_factors = 0;
  std::vector<std::string> warnings;
  std::map<std::string, double> timings_s;
};

/// Fills the residual statistics of a report from the current problem state.
void fill_statistics(const Problem& problem, const SolverOptions& options, CalibrationReport& report);

/// Alternates LM inner passes with outer time shifts until convergence.
/// A saturated LM pass ends the solve early with report.failed set.
CalibrationReport solve(Problem& problem, const SolverOptions& options);

}  // namespace dtcalib

#endif  // DTCALIB_SOLVER_HPP_
