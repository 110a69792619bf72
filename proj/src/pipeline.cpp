#include "dtcalib/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <set>

#include "dtcalib/errors.hpp"

namespace dtcalib {

CalibrationReport run_calibration(const ImuStream& imu, const std::vector<FrameDetections>& frames,
                                  const BoardGeometry& board, const std::vector<CameraModel>& cameras,
                                  const ImuNoiseModel& noise, const PipelineOptions& options) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const std::vector<FrameDetections> used = decimate_frames(frames, options.cam_rate_decimate);
  const InitialGuess guess =
      initialize(imu.samples, used, board, cameras, noise, options.gravity_norm, options.overrides);
  const double t_init = std::chrono::duration<double>(Clock::now() - t0).count();

  std::vector<double> camera_times;
  std::vector<std::vector<FrameObservation>> observations;
  std::size_t skipped = 0;
  for (const std::size_t i : guess.frame_indices) {
    camera_times.push_back(used[i].t);
    std::vector<FrameObservation> obs;
    for (std::size_t n = 0; n < 2; ++n) {
      for (const auto& c : used[i].cameras[n]) {
        if (n >= cameras.size()) {
          ++skipped;
          continue;
        }
        obs.push_back({static_cast<int>(n), c.id, c.pixel});
      }
    }
    observations.push_back(std::move(obs));
  }

  auto stream = std::make_shared<const std::vector<ImuSample>>(imu.samples);
  Problem problem = build_problem(guess.motion, camera_times, std::move(observations), guess.calib, cameras,
                                  board, stream, noise, options.solver.scheme);
  CalibrationReport report = solve(problem, options.solver);

  report.warnings.insert(report.warnings.begin(), guess.warnings.begin(), guess.warnings.end());
  if (skipped > 0) {
    report.warnings.push_back(std::to_string(skipped) + " detections reference an unconfigured camera; ignored");
  }
  const std::set<double> kept(problem.camera_times.begin(), problem.camera_times.end());
  for (const auto& f : used) {
    if (kept.count(f.t) == 0) report.dropped_frame_times.push_back(f.t);
  }
  report.timings_s["initialization"] = t_init;
  return report;
}

}  // namespace dtcalib
