#ifndef DTCALIB_BOARD_HPP_
#define DTCALIB_BOARD_HPP_

#include <vector>

#include "dtcalib/lie.hpp"

namespace dtcalib {

/**
 * @brief Planar AprilTag grid. Defines the world frame: all corners lie at z = 0.
 *
 * Tag (r, c) has index r * cols + c and its lower-left corner at
 * (c, r) * tag_size * (1 + tag_spacing). Corner ids are 4 * tag_index + k with
 * k = 0..3 counter-clockwise from the lower-left corner.
 */
class BoardGeometry {
 public:
  BoardGeometry() = default;

  static BoardGeometry BuildGrid(int rows, int cols, double tag_size, double tag_spacing);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double tag_size() const { return tag_size_; }
  double tag_spacing() const { return tag_spacing_; }

  int num_corners() const { return static_cast<int>(corners_.size()); }
  bool has_corner(int id) const { return id >= 0 && id < num_corners(); }
  /// Throws RangeError for an unknown id.
  const Vec3& corner(int id) const;
  const std::vector<Vec3>& corners() const { return corners_; }
  Vec3 center() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  double tag_size_ = 0.0;
  double tag_spacing_ = 0.0;
  std::vector<Vec3> corners_;
};

}  // namespace dtcalib

#endif  // DTCALIB_BOARD_HPP_
