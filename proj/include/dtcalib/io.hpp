#ifndef DTCALIB_IO_HPP_
#define DTCALIB_IO_HPP_

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dtcalib/board.hpp"
#include "dtcalib/camera.hpp"
#include "dtcalib/dataset.hpp"
#include "dtcalib/init.hpp"
#include "dtcalib/solver.hpp"
#include "dtcalib/synth.hpp"

namespace dtcalib {

/// Header line of the IMU CSV format.
inline constexpr const char* kImuCsvHeader = "t_ns,gx,gy,gz,ax,ay,az";

/**
 * @brief Reads `t_ns,gx,gy,gz,ax,ay,az` rows.
 *
 * Sample times are seconds relative to the first row. Malformed rows raise
 * ParseError with the 1-based line number; non-increasing or repeated stamps
 * raise FormatError naming the first offending line.
 */
ImuStream parse_imu_csv(std::istream& in);
ImuStream load_imu_csv(const std::filesystem::path& path);
void write_imu_csv(const std::filesystem::path& path, const ImuStream& imu);

/**
 * @brief Reads `{"frames": [{"t_ns", "cam", "corners": [{"id", "u", "v"}]}]}`.
 *
 * Records sharing t_ns are merged into one frame; frames come back in time
 * order with t relative to epoch_ns. Unknown corner ids, camera indices outside
 * [0, num_cameras) and repeated (t_ns, cam, id) raise ValidationError.
 */
std::vector<FrameDetections> parse_detections(const std::string& text, const BoardGeometry& board, int num_cameras,
                                              std::int64_t epoch_ns);
std::vector<FrameDetections> load_detections(const std::filesystem::path& path, const BoardGeometry& board,
                                             int num_cameras, std::int64_t epoch_ns);
void write_detections(const std::filesystem::path& path, const std::vector<FrameDetections>& frames,
                      int num_cameras);

GroundTruth load_truth(const std::filesystem::path& path);
void write_truth(const std::filesystem::path& path, const GroundTruth& truth);

struct BoardConfig {
  int rows = 6;
  int cols = 6;
  double tag_size = 0.088;
  double tag_spacing = 0.3;

  BoardGeometry build() const { return BoardGeometry::BuildGrid(rows, cols, tag_size, tag_spacing); }
};

/// Calibration run configuration. Relative paths are resolved against the config file's directory.
struct RunConfig {
  std::filesystem::path imu_path;
  std::filesystem::path detections_path;
  std::filesystem::path output_dir;
  BoardConfig board;
  std::vector<CameraModel> cameras;
  std::optional<double> gyro_noise_density;
  std::optional<double> accel_noise_density;
  std::optional<double> gyro_sigma;   ///< per-sample standard deviation
  std::optional<double> accel_sigma;
  double pixel_sigma = 1.0;
  SolverOptions solver;
  double gravity_norm = 9.81;
  int cam_rate_decimate = 1;
  InitialGuessOverrides overrides;

  /// Per-sample noise; densities are converted with the median sample period of the stream.
  ImuNoiseModel noise_model(const ImuStream& imu) const;
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           bool check_files = true);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config, const std::filesystem::path& base_dir);

/// Simulation request: generator settings plus where to write the dataset.
struct SimulateConfig {
  SynthConfig synth = SynthConfig::EurocLike();
  BoardConfig board;
  std::filesystem::path output_dir;
  double run_pixel_sigma = 1.0;  ///< written into the generated run config
};

SimulateConfig parse_simulate_config(const std::string& text, const std::filesystem::path& base_dir);
SimulateConfig load_simulate_config(const std::filesystem::path& path);

/// Writes imu.csv, detections.json, truth.json and run.json into the output directory.
void write_simulation(const SimulateConfig& config, const SyntheticDataset& data);

/// Writes result.json and summary.txt. Throws IoError when the directory cannot be written.
void emit_report(const CalibrationReport& report, const std::filesystem::path& dir);
std::string report_to_json(const CalibrationReport& report);
std::string report_summary(const CalibrationReport& report);

/// The calibration values of a result file.
struct CalibrationResult {
  bool converged = false;
  int num_cameras = 2;
  std::array<Pose, 2> T_IC{};
  double time_offset = 0.0;
  Vec3 b_gyro = Vec3::Zero();
  Vec3 b_accel = Vec3::Zero();
  Vec3 gravity = Vec3::Zero();
};

CalibrationResult parse_result(const std::string& text);
CalibrationResult load_result(const std::filesystem::path& path);

struct ScoreReport {
  int num_cameras = 2;
  std::array<double, 2> rotation_deg{0.0, 0.0};
  std::array<double, 2> translation_cm{0.0, 0.0};
  double time_offset_ms = 0.0;  ///< estimate minus truth
  double gravity_deg = 0.0;
  double b_gyro = 0.0;
  double b_accel = 0.0;
};

ScoreReport score(const CalibrationResult& result, const GroundTruth& truth);
std::string format_score(const ScoreReport& s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dtcalib

#endif  // DTCALIB_IO_HPP_
