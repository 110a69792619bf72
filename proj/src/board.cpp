#include "dtcalib/board.hpp"

#include <cmath>
#include <string>

#include "dtcalib/errors.hpp"

namespace dtcalib {

BoardGeometry BoardGeometry::BuildGrid(int rows, int cols, double tag_size, double tag_spacing) {
  if (rows < 1 || cols < 1) throw ConfigError("board rows and cols must be >= 1");
  if (!(tag_size > 0.0) || !std::isfinite(tag_size)) throw ConfigError("board tag_size must be positive");
  if (!(tag_spacing >= 0.0) || !std::isfinite(tag_spacing)) throw ConfigError("board tag_spacing must be >= 0");

  BoardGeometry b;
  b.rows_ = rows;
  b.cols_ = cols;
  b.tag_size_ = tag_size;
  b.tag_spacing_ = tag_spacing;
  b.corners_.reserve(static_cast<std::size_t>(4 * rows * cols));
  const double pitch = tag_size * (1.0 + tag_spacing);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double x0 = c * pitch;
      const double y0 = r * pitch;
      b.corners_.emplace_back(x0, y0, 0.0);
      b.corners_.emplace_back(x0 + tag_size, y0, 0.0);
      b.corners_.emplace_back(x0 + tag_size, y0 + tag_size, 0.0);
      b.corners_.emplace_back(x0, y0 + tag_size, 0.0);
    }
  }
  return b;
}

const Vec3& BoardGeometry::corner(int id) const {
  if (!has_corner(id)) throw RangeError("unknown board corner id " + std::to_string(id));
  return corners_[static_cast<std::size_t>(id)];
}

Vec3 BoardGeometry::center() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& c : corners_) sum += c;
  return corners_.empty() ? sum : Vec3(sum / static_cast<double>(corners_.size()));
}

}  // namespace dtcalib
