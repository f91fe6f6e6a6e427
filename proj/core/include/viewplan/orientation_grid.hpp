#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace viewplan {

/// The set of rotations whose intrinsic-XYZ Euler angles are all multiples of a
/// rotation step, plus one permutation per (axis, sign) describing where a single
/// rotation action takes each member.
///
/// A local-axis rotation of a grid member usually lands off the grid. Each
/// permutation sends a member to the grid rotation it is assigned by a
/// minimum-total-geodesic-error matching between {G * A} and {G}; members whose
/// product is exactly on the grid keep that product. Because the matching is a
/// bijection, the opposite action is its inverse permutation.
class OrientationGrid {
 public:
  /// Cached per step; nullptr when 180 / step is not an integer in [1, 6].
  static const OrientationGrid* for_step(double step_deg);

  [[nodiscard]] std::size_t size() const { return members_.size(); }
  [[nodiscard]] const Eigen::Matrix3d& rotation(std::size_t index) const { return members_[index]; }
  [[nodiscard]] std::optional<std::size_t> index_of(const Eigen::Matrix3d& r) const;
  [[nodiscard]] std::size_t step(std::size_t index, int axis, int sign) const;

  /// Geodesic error (degrees) between the exact local rotation and the assigned member.
  [[nodiscard]] double assignment_error_deg(std::size_t index, int axis, int sign) const;

  [[nodiscard]] double step_deg() const { return step_deg_; }

  explicit OrientationGrid(double step_deg);

 private:
  [[nodiscard]] std::optional<std::size_t> lookup_key(long a, long b, long c) const;
  [[nodiscard]] long wrap(long k) const;

  double step_deg_;
  long per_turn_;  // multiples per full turn
  std::vector<Eigen::Matrix3d> members_;
  std::vector<long> key_table_;  // dense (a, b, c) -> member index or -1
  std::array<std::vector<std::size_t>, 3> forward_;
  std::array<std::vector<std::size_t>, 3> backward_;
};

/// Minimum-cost perfect assignment on a square cost matrix (row-major, n x n).
/// Returns column assigned to each row.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n);

}  // namespace viewplan
