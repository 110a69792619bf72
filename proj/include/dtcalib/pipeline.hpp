#ifndef DTCALIB_PIPELINE_HPP_
#define DTCALIB_PIPELINE_HPP_

#include <vector>

#include "dtcalib/board.hpp"
#include "dtcalib/camera.hpp"
#include "dtcalib/dataset.hpp"
#include "dtcalib/init.hpp"
#include "dtcalib/solver.hpp"

namespace dtcalib {

struct PipelineOptions {
  SolverOptions solver;
  int cam_rate_decimate = 1;
  double gravity_norm = 9.81;
  InitialGuessOverrides overrides;
};

/// Decimation, initialization, problem assembly and the full solve.
CalibrationReport run_calibration(const ImuStream& imu, const std::vector<FrameDetections>& frames,
                                  const BoardGeometry& board, const std::vector<CameraModel>& cameras,
                                  const ImuNoiseModel& noise, const PipelineOptions& options);

}  // namespace dtcalib

#endif  // DTCALIB_PIPELINE_HPP_
