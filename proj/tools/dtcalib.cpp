#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dtcalib/errors.hpp"
#include "dtcalib/io.hpp"
#include "dtcalib/pipeline.hpp"
#include "dtcalib/synth.hpp"

namespace {

constexpr int kExitNotConverged = 1;
constexpr int kExitError = 2;

int run_simulate(const std::string& config_path, std::optional<std::uint64_t> seed) {
  dtcalib::SimulateConfig config = dtcalib::load_simulate_config(config_path);
  if (seed) config.synth.seed = *seed;
  const dtcalib::SyntheticDataset data = dtcalib::simulate(config.synth);
  dtcalib::write_simulation(config, data);
  std::printf("wrote %zu IMU samples and %zu frames to %s\n", data.imu.samples.size(), data.frames.size(),
              config.output_dir.string().c_str());
  return 0;
}

int run_calibrate(const std::string& config_path, std::optional<std::string> scheme,
                  std::optional<int> decimate, std::optional<std::string> output_dir) {
  dtcalib::RunConfig config = dtcalib::load_run_config(config_path);
  if (scheme) config.solver.scheme = dtcalib::scheme_from_string(*scheme);
  if (decimate) {
    if (*decimate < 1) throw dtcalib::ConfigError("--cam-rate-decimate must be >= 1");
    config.cam_rate_decimate = *decimate;
  }
  if (output_dir) config.output_dir = *output_dir;

  const dtcalib::BoardGeometry board = config.board.build();
  const dtcalib::ImuStream imu = dtcalib::load_imu_csv(config.imu_path);
  const auto frames = dtcalib::load_detections(config.detections_path, board,
                                               static_cast<int>(config.cameras.size()), imu.epoch_ns);

  dtcalib::PipelineOptions options;
  options.solver = config.solver;
  options.cam_rate_decimate = config.cam_rate_decimate;
  options.gravity_norm = config.gravity_norm;
  options.overrides = config.overrides;
  const dtcalib::CalibrationReport report =
      dtcalib::run_calibration(imu, frames, board, config.cameras, config.noise_model(imu), options);

  dtcalib::emit_report(report, config.output_dir);
  std::cout << dtcalib::report_summary(report);
  std::cout << "results written to " << config.output_dir.string() << "\n";
  if (report.failed) return kExitError;
  return report.converged ? 0 : kExitNotConverged;
}

int run_score(const std::string& result_path, const std::string& truth_path) {
  const dtcalib::CalibrationResult result = dtcalib::load_result(result_path);
  const dtcalib::GroundTruth truth = dtcalib::load_truth(truth_path);
  std::cout << dtcalib::format_score(dtcalib::score(result, truth));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera-IMU spatial and temporal calibration"};
  app.require_subcommand(1);

  std::string sim_config;
  std::optional<std::uint64_t> seed;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim->add_option("config", sim_config, "Simulation config (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "Random seed, overrides the config");

  std::string run_config;
  std::optional<std::string> scheme;
  std::optional<int> decimate;
  std::optional<std::string> output_dir;
  auto* cal = app.add_subcommand("calibrate", "Estimate extrinsics, time offset, biases and gravity");
  cal->add_option("config", run_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  cal->add_option("--scheme", scheme, "Integration scheme")->check(CLI::IsMember({"midpoint", "euler"}));
  cal->add_option("--cam-rate-decimate", decimate, "Keep every n-th camera frame");
  cal->add_option("--output-dir", output_dir, "Output directory, overrides the config");

  std::string result_path;
  std::string truth_path;
  auto* sc = app.add_subcommand("score", "Compare a result file against ground truth");
  sc->add_option("result", result_path, "result.json from calibrate")->required()->check(CLI::ExistingFile);
  sc->add_option("truth", truth_path, "truth.json from simulate")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*sim) return run_simulate(sim_config, seed);
    if (*cal) return run_calibrate(run_config, scheme, decimate, output_dir);
    if (*sc) return run_score(result_path, truth_path);
  } catch (const dtcalib::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
