#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dtcalib/errors.hpp"
#include "dtcalib/io.hpp"
#include "dtcalib/pipeline.hpp"

using namespace dtcalib;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dtcalib_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImuStream parse(const std::string& text) {
  std::istringstream in(text);
  return parse_imu_csv(in);
}

const char* kCameraBlock = R"("cameras": [{"fx": 460, "fy": 460, "cx": 376, "cy": 240}])";

}  // namespace

TEST_CASE("imu csv") {
  SUBCASE("two rows") {
    const auto s = parse("t_ns,gx,gy,gz,ax,ay,az\n100,1,2,3,4,5,6\n5000100,0.5,-1e-3,0,9.81,0,-0.25\n");
    REQUIRE(s.samples.size() == 2);
    CHECK(s.epoch_ns == 100);
    CHECK(s.samples[0].t == 0.0);
    CHECK(s.samples[1].t == 0.005);
    CHECK(s.samples[0].gyro == Vec3(1.0, 2.0, 3.0));
    CHECK(s.samples[1].accel == Vec3(9.81, 0.0, -0.25));
    CHECK(s.samples[1].gyro.y() == -1e-3);
  }
  SUBCASE("out of order names the line") {
    try {
      parse("t_ns,gx,gy,gz,ax,ay,az\n100,0,0,0,0,0,0\n300,0,0,0,0,0,0\n200,0,0,0,0,0,0\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
  }
  SUBCASE("duplicates and malformed rows") {
    CHECK_THROWS_AS(parse("t_ns,gx,gy,gz,ax,ay,az\n100,0,0,0,0,0,0\n100,0,0,0,0,0,0\n"), FormatError);
    try {
      parse("t_ns,gx,gy,gz,ax,ay,az\n100,0,0,0,0,0,0\n200,0,zero,0,0,0,0\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse("t_ns,gx,gy,gz,ax,ay,az\n100,0,0,0,0,0\n"), ParseError);
    CHECK_THROWS_AS(parse("t_ns,gx,gy,gz,ax,ay,az\n100,0,0,0,0,0,0,0\n"), ParseError);
    CHECK_THROWS_AS(parse("t,gx,gy,gz,ax,ay,az\n100,0,0,0,0,0,0\n"), ParseError);
    CHECK_THROWS_AS(parse("t_ns,gx,gy,gz,ax,ay,az\n1.5,0,0,0,0,0,0\n"), ParseError);
    CHECK_THROWS_AS(parse("t_ns,gx,gy,gz,ax,ay,az\n100,nan,0,0,0,0,0\n"), ParseError);
    CHECK_THROWS_AS(parse(""), ParseError);
  }
  SUBCASE("round trip is bit exact") {
    SynthConfig c = SynthConfig::EurocLike();
    c.duration = 2.0;
    const auto d = simulate(c);
    const auto dir = scratch_dir("imu");
    write_imu_csv(dir / "imu.csv", d.imu);
    const auto back = load_imu_csv(dir / "imu.csv");
    REQUIRE(back.samples.size() == d.imu.samples.size());
    CHECK(back.t_ns == d.imu.t_ns);
    for (std::size_t k = 0; k < back.samples.size(); ++k) {
      CHECK(back.samples[k].t == d.imu.samples[k].t);
      CHECK(back.samples[k].gyro == d.imu.samples[k].gyro);
      CHECK(back.samples[k].accel == d.imu.samples[k].accel);
    }
  }
  CHECK_THROWS_AS(load_imu_csv("/nonexistent/imu.csv"), IoError);
}

TEST_CASE("detections") {
  const auto board = BoardGeometry::BuildGrid(2, 2, 0.1, 0.3);
  SUBCASE("single frame") {
    const auto f = parse_detections(
        R"({"frames": [{"t_ns": 1500, "cam": 0, "corners": [{"id": 0, "u": 1, "v": 2}, {"id": 1, "u": 3, "v": 4},
                                                            {"id": 2, "u": 5, "v": 6}, {"id": 3, "u": 7, "v": 8}]}]})",
        board, 2, 1000);
    REQUIRE(f.size() == 1);
    CHECK(f[0].cameras[0].size() == 4);
    CHECK(f[0].cameras[1].empty());
    CHECK(f[0].t == doctest::Approx(5e-7));
    CHECK(f[0].cameras[0][3].pixel == Vec2(7.0, 8.0));
  }
  SUBCASE("records merge by time and come back sorted") {
    const auto f = parse_detections(
        R"({"frames": [{"t_ns": 2000, "cam": 1, "corners": [{"id": 5, "u": 1, "v": 1}]},
                       {"t_ns": 1000, "cam": 0, "corners": [{"id": 5, "u": 1, "v": 1}]},
                       {"t_ns": 2000, "cam": 0, "corners": [{"id": 5, "u": 1, "v": 1}]}]})",
        board, 2, 0);
    REQUIRE(f.size() == 2);
    CHECK(f[0].t_ns == 1000);
    CHECK(f[1].cameras[0].size() == 1);
    CHECK(f[1].cameras[1].size() == 1);
  }
  SUBCASE("rejections") {
    const std::string dup = R"({"frames": [{"t_ns": 1, "cam": 0, "corners": [{"id": 1, "u": 1, "v": 1},
                                                                             {"id": 1, "u": 2, "v": 2}]}]})";
    CHECK_THROWS_AS(parse_detections(dup, board, 2, 0), ValidationError);
    const std::string unknown = R"({"frames": [{"t_ns": 1, "cam": 0, "corners": [{"id": 16, "u": 1, "v": 1}]}]})";
    CHECK_THROWS_AS(parse_detections(unknown, board, 2, 0), ValidationError);
    const std::string cam = R"({"frames": [{"t_ns": 1, "cam": 1, "corners": []}]})";
    CHECK_THROWS_AS(parse_detections(cam, board, 1, 0), ValidationError);
    CHECK_THROWS_AS(parse_detections("{\"frames\": 3}", board, 2, 0), FormatError);
    CHECK_THROWS_AS(parse_detections("not json", board, 2, 0), FormatError);
  }
  SUBCASE("round trip") {
    SynthConfig c = SynthConfig::EurocLike();
    c.duration = 2.0;
    const auto d = simulate(c);
    const auto dir = scratch_dir("det");
    write_detections(dir / "d.json", d.frames, 2);
    const auto back = load_detections(dir / "d.json", c.board, 2, d.imu.epoch_ns);
    REQUIRE(back.size() == d.frames.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].t == d.frames[i].t);
      for (std::size_t n = 0; n < 2; ++n) {
        REQUIRE(back[i].cameras[n].size() == d.frames[i].cameras[n].size());
        for (std::size_t k = 0; k < back[i].cameras[n].size(); ++k) {
          CHECK(back[i].cameras[n][k].id == d.frames[i].cameras[n][k].id);
          CHECK((back[i].cameras[n][k].pixel - d.frames[i].cameras[n][k].pixel).norm() <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("run config") {
  const auto dir = scratch_dir("cfg");
  write_text_file(dir / "imu.csv", "t_ns,gx,gy,gz,ax,ay,az\n");
  write_text_file(dir / "det.json", "{\"frames\": []}");
  const std::string base = std::string(R"({"imu": "imu.csv", "detections": "det.json", )") + kCameraBlock;

  const auto c = parse_run_config(base + R"(, "noise": {"gyro_noise_density": 1.7e-4, "accel_noise_density": 2e-3},
                                         "solver": {"scheme": "euler", "max_inner": 7}})",
                                  dir);
  CHECK(c.imu_path == dir / "imu.csv");
  CHECK(c.output_dir == dir / "output");
  CHECK(c.solver.scheme == IntegrationScheme::Euler);
  CHECK(c.solver.max_inner == 7);
  CHECK(c.cameras.size() == 1);
  CHECK(c.pixel_sigma == 1.0);
  CHECK(c.gravity_norm == 9.81);

  const std::string noise = R"(, "noise": {"gyro_sigma": 0.01, "accel_sigma": 0.1}})";
  CHECK_NOTHROW(parse_run_config(base + noise, dir));
  CHECK_THROWS_AS(parse_run_config(base + R"(, "noise": {"gyro_sigma": 0.01}})", dir), ConfigError);
  CHECK_THROWS_AS(parse_run_config(base + R"(, "colour": 1)" + noise, dir), ConfigError);
  CHECK_THROWS_AS(parse_run_config(base + R"(, "solver": {"sceme": "euler"})" + noise, dir), ConfigError);
  CHECK_THROWS_AS(parse_run_config(base + R"(, "solver": {"scheme": "rk4"})" + noise, dir), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"imu": "missing.csv", "detections": "det.json", )" +
                                       std::string(kCameraBlock) + noise,
                                   dir),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"imu": "imu.csv", "detections": "det.json", "cameras": [])" + noise, dir),
                  ConfigError);
  const auto guess = parse_run_config(
      base + R"(, "initial_guess": {"time_offset_s": 0.01,
                   "T_IC0": [[1,0,0,0.1],[0,1,0,0],[0,0,1,0],[0,0,0,1]]})" + noise,
      dir);
  CHECK(*guess.overrides.time_offset == 0.01);
  CHECK(guess.overrides.T_IC0->p == Vec3(0.1, 0.0, 0.0));
  CHECK_THROWS_AS(parse_run_config(base + R"(, "initial_guess": {"T_IC0": [[2,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]})" +
                                       noise,
                                   dir),
                  ConfigError);

  const auto again = parse_run_config(run_config_to_json(c, dir), dir);
  CHECK(again.imu_path == c.imu_path);
  CHECK(again.solver.scheme == c.solver.scheme);
  CHECK(again.cameras[0].fx == c.cameras[0].fx);
}

TEST_CASE("simulate config") {
  const auto dir = scratch_dir("sim");
  const auto s = parse_simulate_config(R"({"seed": 9, "duration": 4, "time_offset_s": -0.02, "num_cameras": 1,
                                           "b_gyro": [0.001, 0, 0], "profile": {"rot_amplitude": [0.1, 0.1, 0.1]}})",
                                       dir);
  CHECK(s.synth.seed == 9u);
  CHECK(s.synth.num_cameras == 1);
  CHECK(s.synth.time_offset == -0.02);
  CHECK(s.synth.profile.rot_amplitude == Vec3::Constant(0.1));
  CHECK(s.output_dir == dir / "sim");
  CHECK_THROWS_AS(parse_simulate_config(R"({"sed": 9})", dir), ConfigError);
  CHECK_THROWS_AS(parse_simulate_config(R"({"duration": -1})", dir), ConfigError);
}

TEST_CASE("report, result and score") {
  SynthConfig c = SynthConfig::EurocLike();
  c.duration = 15.0;
  c.time_offset = 0.012;
  SimulateConfig sim;
  sim.synth = c;
  sim.output_dir = scratch_dir("pipeline");
  const auto d = simulate(c);
  write_simulation(sim, d);
  const RunConfig run = load_run_config(sim.output_dir / "run.json");
  CHECK(run.cameras.size() == 2);

  const auto imu = load_imu_csv(run.imu_path);
  const auto frames = load_detections(run.detections_path, run.board.build(), 2, imu.epoch_ns);
  PipelineOptions o;
  o.solver = run.solver;
  const auto report = run_calibration(imu, frames, run.board.build(), run.cameras, run.noise_model(imu), o);
  REQUIRE(report.converged);
  emit_report(report, run.output_dir);
  CHECK(fs::exists(run.output_dir / "summary.txt"));

  const auto result = load_result(run.output_dir / "result.json");
  CHECK(result.converged);
  CHECK(result.num_cameras == 2);
  CHECK(result.time_offset == report.final_state.total_time_offset());
  CHECK(result.T_IC[1].R == report.final_state.T_IC[1].R);
  CHECK(result.T_IC[1].p == report.final_state.T_IC[1].p);
  CHECK(result.b_accel == report.final_state.b_accel);
  CHECK(result.gravity == report.final_state.gravity());

  const auto truth = load_truth(sim.output_dir / "truth.json");
  CHECK(truth.time_offset == 0.012);
  CHECK(truth.T_IC[0].R == c.T_IC[0].R);
  const auto sc = score(result, truth);
  CHECK(std::abs(sc.time_offset_ms) < 0.2);
  CHECK(sc.rotation_deg[0] < 0.05);

  SUBCASE("same inputs give the same result") {
    const auto report2 = run_calibration(imu, frames, run.board.build(), run.cameras, run.noise_model(imu), o);
    auto strip = [](CalibrationReport r) {
      r.timings_s.clear();
      return report_to_json(r);
    };
    CHECK(strip(report) == strip(report2));
  }

  SUBCASE("unwritable output") {
    CHECK_THROWS_AS(emit_report(report, "/proc/dtcalib/out"), IoError);
  }
}

TEST_CASE("score by hand") {
  CalibrationResult r;
  r.num_cameras = 1;
  r.T_IC[0] = Pose(so3_exp(Vec3(0.0, 0.0, M_PI / 180.0)), Vec3(0.01, 0.0, 0.0));
  r.time_offset = 0.0205;
  r.gravity = Vec3(0.0, -9.81, 0.0);
  r.b_gyro = Vec3(0.001, 0.0, 0.0);
  r.b_accel = Vec3(0.0, 0.03, 0.04);
  GroundTruth t;
  t.num_cameras = 1;
  t.time_offset = 0.02;
  const auto s = score(r, t);
  CHECK(s.rotation_deg[0] == doctest::Approx(1.0));
  CHECK(s.translation_cm[0] == doctest::Approx(1.0));
  CHECK(s.time_offset_ms == doctest::Approx(0.5));
  CHECK(s.gravity_deg == doctest::Approx(0.0));
  CHECK(s.b_accel == doctest::Approx(0.05));
  const std::string text = format_score(s);
  CHECK(text.find("cam0 rotation error: 1.000000 deg") != std::string::npos);
  CHECK(text.find("cam0 translation error: 1.000000 cm") != std::string::npos);
  CHECK(text.find("time offset error: +0.500000 ms") != std::string::npos);
}

TEST_CASE("result parsing rejects malformed files") {
  CHECK_THROWS_AS(parse_result("{}"), FormatError);
  CHECK_THROWS(parse_result(R"({"converged": true, "result": {"T_IC0": [[1]]}})"));
}
