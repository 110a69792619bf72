#include "dtcalib/dataset.hpp"

#include "dtcalib/errors.hpp"

namespace dtcalib {

std::vector<FrameDetections> decimate_frames(const std::vector<FrameDetections>& frames, int n) {
  if (n < 1) throw InvalidArgument("decimation factor must be >= 1");
  std::vector<FrameDetections> out;
  out.reserve(frames.size() / static_cast<std::size_t>(n) + 1);
  for (std::size_t i = 0; i < frames.size(); i += static_cast<std::size_t>(n)) out.push_back(frames[i]);
  return out;
}

}  // namespace dtcalib
