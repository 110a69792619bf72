#ifndef DTCALIB_DATASET_HPP_
#define DTCALIB_DATASET_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "dtcalib/imu_preint.hpp"
#include "dtcalib/lie.hpp"

namespace dtcalib {

/// IMU samples with their on-disk nanosecond stamps. samples[k].t = (t_ns[k] - epoch_ns) * 1e-9.
struct ImuStream {
  std::int64_t epoch_ns = 0;
  std::vector<std::int64_t> t_ns;
  std::vector<ImuSample> samples;
};

struct CornerMeasurement {
  int id = 0;
  Vec2 pixel = Vec2::Zero();
};

/// All detections sharing one image timestamp (camera clock).
struct FrameDetections {
  std::int64_t t_ns = 0;
  double t = 0.0;  ///< seconds relative to the IMU epoch, camera clock
  std::array<std::vector<CornerMeasurement>, 2> cameras;
};

struct GroundTruth {
  std::array<Pose, 2> T_IC{};
  int num_cameras = 2;
  double time_offset = 0.0;
  Vec3 b_gyro = Vec3::Zero();
  Vec3 b_accel = Vec3::Zero();
  Vec3 gravity = Vec3(0.0, -9.81, 0.0);
};

/// Seconds relative to an epoch, from integer nanoseconds.
inline double ns_to_seconds(std::int64_t t_ns, std::int64_t epoch_ns) {
  return static_cast<double>(t_ns - epoch_ns) * 1e-9;
}

/// Keeps every n-th frame (n >= 1), starting with the first.
std::vector<FrameDetections> decimate_frames(const std::vector<FrameDetections>& frames, int n);

}  // namespace dtcalib

#endif  // DTCALIB_DATASET_HPP_
