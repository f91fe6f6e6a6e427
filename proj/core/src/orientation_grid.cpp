#include "viewplan/orientation_grid.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "viewplan/se3.hpp"

namespace viewplan {

namespace {

constexpr double kMemberTolerance = 1e-7;

}  // namespace

std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("solve_assignment: cost is not n x n");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with potentials; indices are 1-based internally.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      const double* row = &cost[(i0 - 1) * n];
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

OrientationGrid::OrientationGrid(double step_deg) : step_deg_(step_deg) {
  const double turns = 360.0 / step_deg;
  per_turn_ = std::lround(turns);
  if (std::abs(turns - static_cast<double>(per_turn_)) > 1e-9 || per_turn_ % 2 != 0) {
    throw std::invalid_argument("OrientationGrid: step must divide 180 degrees");
  }
  key_table_.assign(static_cast<std::size_t>(per_turn_ * per_turn_ * per_turn_), -1);

  const long half = per_turn_ / 2;
  for (long a = -half + 1; a <= half; ++a) {
    for (long b = -half + 1; b <= half; ++b) {
      for (long c = -half + 1; c <= half; ++c) {
        const Eigen::Matrix3d r = euler_to_matrix(
            {static_cast<double>(a) * step_deg, static_cast<double>(b) * step_deg,
             static_cast<double>(c) * step_deg});
        const EulerAngles e = euler_decompose(r).angles;
        const long ka = wrap(std::lround(e.rx / step_deg));
        const long kb = wrap(std::lround(e.ry / step_deg));
        const long kc = wrap(std::lround(e.rz / step_deg));
        const auto slot = static_cast<std::size_t>(((ka + half - 1) * per_turn_ + (kb + half - 1)) * per_turn_ +
                                                   (kc + half - 1));
        if (key_table_[slot] >= 0) continue;
        key_table_[slot] = static_cast<long>(members_.size());
        members_.push_back(euler_to_matrix({static_cast<double>(ka) * step_deg,
                                            static_cast<double>(kb) * step_deg,
                                            static_cast<double>(kc) * step_deg}));
      }
    }
  }

  const std::size_t n = members_.size();
  for (int axis = 0; axis < 3; ++axis) {
    const Eigen::Matrix3d step_rot = axis_rotation(axis, step_deg);
    std::vector<std::size_t> fwd(n, n);
    std::vector<char> column_taken(n, 0);
    std::vector<Eigen::Matrix3d> products(n);
    for (std::size_t j = 0; j < n; ++j) {
      products[j] = members_[j] * step_rot;
      if (auto hit = index_of(products[j])) {
        fwd[j] = *hit;
        column_taken[*hit] = 1;
      }
    }
    std::vector<std::size_t> rows, cols;
    for (std::size_t j = 0; j < n; ++j) {
      if (fwd[j] == n) rows.push_back(j);
      if (!column_taken[j]) cols.push_back(j);
    }
    if (rows.size() != cols.size()) throw std::logic_error("OrientationGrid: exact products collide");
    if (!rows.empty()) {
      const std::size_t m = rows.size();
      std::vector<double> cost(m * m);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
          cost[r * m + c] = rotation_distance_deg(products[rows[r]], members_[cols[c]]);
        }
      }
      const std::vector<std::size_t> match = solve_assignment(cost, m);
      for (std::size_t r = 0; r < m; ++r) fwd[rows[r]] = cols[match[r]];
    }
    std::vector<std::size_t> bwd(n);
    for (std::size_t j = 0; j < n; ++j) bwd[fwd[j]] = j;
    forward_[axis] = std::move(fwd);
    backward_[axis] = std::move(bwd);
  }
}

long OrientationGrid::wrap(long k) const {
  const long half = per_turn_ / 2;
  k = ((k % per_turn_) + per_turn_) % per_turn_;
  return k > half ? k - per_turn_ : k;
}

std::optional<std::size_t> OrientationGrid::lookup_key(long a, long b, long c) const {
  const long half = per_turn_ / 2;
  const auto slot = static_cast<std::size_t>(((wrap(a) + half - 1) * per_turn_ + (wrap(b) + half - 1)) * per_turn_ +
                                             (wrap(c) + half - 1));
  const long idx = key_table_[slot];
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

std::optional<std::size_t> OrientationGrid::index_of(const Eigen::Matrix3d& r) const {
  const EulerAngles e = euler_decompose(r).angles;
  auto idx = lookup_key(std::lround(e.rx / step_deg_), std::lround(e.ry / step_deg_),
                        std::lround(e.rz / step_deg_));
  if (!idx) return std::nullopt;
  if ((members_[*idx] - r).cwiseAbs().maxCoeff() > kMemberTolerance) return std::nullopt;
  return idx;
}

std::size_t OrientationGrid::step(std::size_t index, int axis, int sign) const {
  return sign > 0 ? forward_.at(static_cast<std::size_t>(axis))[index]
                  : backward_.at(static_cast<std::size_t>(axis))[index];
}

double OrientationGrid::assignment_error_deg(std::size_t index, int axis, int sign) const {
  const Eigen::Matrix3d exact =
      members_[index] * axis_rotation(axis, sign > 0 ? step_deg_ : -step_deg_);
  return rotation_distance_deg(exact, members_[step(index, axis, sign)]);
}

const OrientationGrid* OrientationGrid::for_step(double step_deg) {
  if (!(step_deg > 0.0)) return nullptr;
  const double ratio = 180.0 / step_deg;
  const long k = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(k)) > 1e-9 || k < 1 || k > 6) return nullptr;

  static std::mutex mutex;
  static std::map<long, std::unique_ptr<OrientationGrid>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[k];
  if (!slot) slot = std::make_unique<OrientationGrid>(180.0 / static_cast<double>(k));
  return slot.get();
}

}  // namespace viewplan
