#include "viewplan/se3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/SVD>
#include <fmt/format.h>

namespace viewplan {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
// Added before flooring so that halves that decompose a few ulps short still round up.
constexpr double kTieEpsilon = 1e-9;
// Comparisons at the success boundary tolerate round-off from the distance kernel.
constexpr double kBoundaryEpsilon = 1e-9;

}  // namespace

bool Pose::is_valid(double tol) const {
  if (!position.allFinite() || !rotation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation * rotation.transpose();
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

double normalize_degrees(double deg) {
  double x = std::fmod(deg, 360.0);
  if (x <= -180.0) x += 360.0;
  if (x > 180.0) x -= 360.0;
  return x;
}

Eigen::Matrix3d axis_rotation(int axis, double degrees) {
  const double rad = degrees * kDegToRad;
  // Exact values at quarter turns keep grid arithmetic clean.
  double c = std::cos(rad);
  double s = std::sin(rad);
  const double q = degrees / 90.0;
  if (q == std::round(q)) {
    const long k = ((static_cast<long>(std::round(q)) % 4) + 4) % 4;
    constexpr double cs[4] = {1.0, 0.0, -1.0, 0.0};
    constexpr double sn[4] = {0.0, 1.0, 0.0, -1.0};
    c = cs[k];
    s = sn[k];
  }
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  switch (axis) {
    case 0:
      r << 1, 0, 0, 0, c, -s, 0, s, c;
      break;
    case 1:
      r << c, 0, s, 0, 1, 0, -s, 0, c;
      break;
    case 2:
      r << c, -s, 0, s, c, 0, 0, 0, 1;
      break;
    default:
      throw std::invalid_argument("axis_rotation: axis must be 0, 1 or 2");
  }
  return r;
}

Eigen::Matrix3d euler_to_matrix(const EulerAngles& e) {
  return axis_rotation(0, e.rx) * axis_rotation(1, e.ry) * axis_rotation(2, e.rz);
}

EulerDecomposition euler_decompose(const Eigen::Matrix3d& r) {
  EulerDecomposition out;
  const double cos_b = std::hypot(r(0, 0), r(0, 1));
  const double b = std::atan2(r(0, 2), cos_b) * kRadToDeg;
  if (std::abs(b) >= 90.0 - kGimbalLockMarginDeg) {
    // Only rx + rz (or rx - rz) is observable; fold it all into rx.
    out.gimbal_locked = true;
    const double a = r(0, 2) > 0.0 ? std::atan2(r(1, 0), r(1, 1)) : std::atan2(-r(1, 0), r(1, 1));
    out.angles = {normalize_degrees(a * kRadToDeg), b, 0.0};
    return out;
  }
  const double a = std::atan2(-r(1, 2), r(2, 2)) * kRadToDeg;
  const double c = std::atan2(-r(0, 1), r(0, 0)) * kRadToDeg;
  out.angles = {normalize_degrees(a), b, normalize_degrees(c)};
  return out;
}

Pose euler_compose(const EulerAngles& e, const Eigen::Vector3d& position) {
  return {position, euler_to_matrix(e)};
}

double rotation_distance_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d m = a.transpose() * b;
  const double sin2 = std::sqrt((m(2, 1) - m(1, 2)) * (m(2, 1) - m(1, 2)) +
                                (m(0, 2) - m(2, 0)) * (m(0, 2) - m(2, 0)) +
                                (m(1, 0) - m(0, 1)) * (m(1, 0) - m(0, 1)));
  const double cos2 = std::clamp(m.trace() - 1.0, -2.0, 2.0);
  return std::atan2(sin2, cos2) * kRadToDeg;
}

ViewDistance view_distance(const Pose& a, const Pose& b, const StepSizes& steps) {
  ViewDistance d;
  d.position = (a.position - b.position).norm();
  d.rotation_deg = rotation_distance_deg(a.rotation, b.rotation);
  d.unified = std::hypot(d.position / steps.translation, d.rotation_deg / steps.rotation_deg);
  return d;
}

bool within_thresholds(const ViewDistance& d, double max_position, double max_rotation_deg) {
  return d.position <= max_position + kBoundaryEpsilon &&
         d.rotation_deg <= max_rotation_deg + kBoundaryEpsilon;
}

bool is_success(const Pose& estimate, const Pose& target, const StepSizes& steps,
                const SuccessThresholds& thresholds) {
  const ViewDistance d = view_distance(estimate, target, steps);
  return within_thresholds(d, thresholds.beta_t * steps.translation,
                           thresholds.beta_r * steps.rotation_deg);
}

double snap_angle(double deg, double step) {
  double snapped = std::floor(deg / step + 0.5 + kTieEpsilon) * step;
  if (snapped <= -180.0) snapped += 360.0;
  if (snapped > 180.0) snapped -= 360.0;
  return snapped == 0.0 ? 0.0 : snapped;  // no negative zero
}

EulerAngles snap_euler(const EulerAngles& e, double step) {
  return {snap_angle(e.rx, step), snap_angle(e.ry, step), snap_angle(e.rz, step)};
}

Pose snap_orientation(const Pose& p, const StepSizes& steps) {
  const double s = steps.rotation_deg;
  const Eigen::Matrix3d first = euler_to_matrix(snap_euler(euler_decompose(p.rotation).angles, s));
  // A locked triple can re-decompose to a different (equivalent) triple; a second
  // pass lands on the canonical one so the result is a fixed point bit-for-bit.
  return {p.position, euler_to_matrix(snap_euler(euler_decompose(first).angles, s))};
}

bool is_grid_aligned(const Pose& p, const StepSizes& steps, double tol_deg) {
  const Pose snapped = snap_orientation(p, steps);
  return rotation_distance_deg(p.rotation, snapped.rotation) <= tol_deg;
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

PoseVector to_vector(const Pose& p) {
  const EulerAngles e = euler_decompose(p.rotation).angles;
  return {p.position.x(), p.position.y(), p.position.z(), e.rx, e.ry, e.rz};
}

Pose from_vector(std::span<const double> v) {
  if (v.size() != 6) throw std::invalid_argument("pose vector must have 6 entries");
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("pose vector has non-finite entry");
  }
  return euler_compose({v[3], v[4], v[5]}, {v[0], v[1], v[2]});
}

std::array<double, 16> to_matrix4(const Pose& p) {
  std::array<double, 16> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[r * 4 + c] = p.rotation(r, c);
    m[r * 4 + 3] = p.position(r);
  }
  m[15] = 1.0;
  return m;
}

Pose from_matrix4(std::span<const double> m) {
  if (m.size() != 16) throw std::invalid_argument("pose matrix must have 16 entries");
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = m[i * 4 + j];
    t(i) = m[i * 4 + 3];
  }
  if (!r.allFinite() || !t.allFinite()) throw std::invalid_argument("pose matrix has non-finite entry");
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-3 ||
      r.determinant() <= 0.0) {
    throw std::invalid_argument("pose matrix rotation block is not a rotation");
  }
  return {t, orthonormalize(r)};
}

namespace {

std::string format_angle(double deg) {
  const double rounded = std::round(deg);
  if (std::abs(deg - rounded) < 1e-6) return fmt::format("{:.0f}", rounded == 0.0 ? 0.0 : rounded);
  return fmt::format("{:.2f}", deg);
}

}  // namespace

std::string format_pose_prompt(const Pose& p) {
  const PoseVector v = to_vector(p);
  return fmt::format("[tx={:.2f}, ty={:.2f}, tz={:.2f}, rx={}, ry={}, rz={}]", v[0], v[1], v[2],
                     format_angle(v[3]), format_angle(v[4]), format_angle(v[5]));
}

Pose parse_pose_vector(const std::string& text) {
  std::string cleaned = text;
  for (char& ch : cleaned) {
    if (ch == '[' || ch == ']' || ch == ',' || ch == '(' || ch == ')' || ch == ';') ch = ' ';
  }
  std::istringstream in(cleaned);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(token, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("pose vector: cannot parse '" + token + "'");
    }
    if (used != token.size()) throw std::invalid_argument("pose vector: cannot parse '" + token + "'");
    values.push_back(value);
  }
  return from_vector(values);
}

}  // namespace viewplan
