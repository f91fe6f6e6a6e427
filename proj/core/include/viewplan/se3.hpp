#pragma once

#include <array>
#include <span>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace viewplan {

/// Camera-to-world pose. Rotation columns are the camera axes expressed in the
/// world frame (OpenCV camera: +X right, +Y down, +Z forward; world is Z-up).
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

  Pose() = default;
  Pose(Eigen::Vector3d t, Eigen::Matrix3d r) : position(std::move(t)), rotation(std::move(r)) {}

  static Pose identity() { return {}; }

  /// Orthonormality and det(R) = +1 within 1e-9, finite position.
  [[nodiscard]] bool is_valid(double tol = 1e-9) const;

  bool operator==(const Pose& other) const = default;
};

/// Intrinsic XYZ Euler angles in degrees, R = Rx(rx) * Ry(ry) * Rz(rz).
struct EulerAngles {
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;

  bool operator==(const EulerAngles&) const = default;
};

struct EulerDecomposition {
  EulerAngles angles;
  bool gimbal_locked = false;
};

struct StepSizes {
  double translation = 0.5;    // meters
  double rotation_deg = 30.0;  // degrees

  [[nodiscard]] bool is_valid() const { return translation > 0.0 && rotation_deg > 0.0; }
};

struct ViewDistance {
  double position = 0.0;      // meters
  double rotation_deg = 0.0;  // degrees
  double unified = 0.0;       // step units
};

struct SuccessThresholds {
  double beta_t = 1.0;
  double beta_r = 1.0;
};

inline constexpr double kGimbalLockMarginDeg = 1e-4;

/// Normalize an angle in degrees to (-180, 180].
double normalize_degrees(double deg);

Eigen::Matrix3d axis_rotation(int axis, double degrees);

Eigen::Matrix3d euler_to_matrix(const EulerAngles& e);
EulerDecomposition euler_decompose(const Eigen::Matrix3d& rotation);
inline EulerDecomposition euler_decompose(const Pose& p) { return euler_decompose(p.rotation); }
Pose euler_compose(const EulerAngles& e, const Eigen::Vector3d& position);

/// Geodesic angle of R1^T R2 in degrees. Uses atan2 of the skew and trace parts,
/// which equals arccos(clamp((tr - 1) / 2)) and stays accurate near 0 and 180.
double rotation_distance_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

ViewDistance view_distance(const Pose& a, const Pose& b, const StepSizes& steps = {});

/// Inclusive success test: d_pos <= beta_t * s_t and d_rot <= beta_r * s_r.
bool is_success(const Pose& estimate, const Pose& target, const StepSizes& steps = {},
                const SuccessThresholds& thresholds = {});
bool within_thresholds(const ViewDistance& d, double max_position, double max_rotation_deg);

/// Round to the nearest multiple of `step`; exact halves go toward +infinity.
double snap_angle(double deg, double step);
EulerAngles snap_euler(const EulerAngles& e, double step);
Pose snap_orientation(const Pose& p, const StepSizes& steps = {});
bool is_grid_aligned(const Pose& p, const StepSizes& steps = {}, double tol_deg = 1e-6);

/// Project an approximately orthonormal matrix onto SO(3).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m);

// Serialization: [tx, ty, tz, rx, ry, rz] and 4x4 row-major camera-to-world.
using PoseVector = std::array<double, 6>;
PoseVector to_vector(const Pose& p);
Pose from_vector(std::span<const double> v);
std::array<double, 16> to_matrix4(const Pose& p);
/// Accepts matrices whose rotation block is within 1e-3 of orthonormal; re-projects onto SO(3).
Pose from_matrix4(std::span<const double> m);

/// "[tx=4.07, ty=3.28, tz=1.66, rx=-90, ry=0, rz=-120]" style printout.
std::string format_pose_prompt(const Pose& p);
Pose parse_pose_vector(const std::string& text);

}  // namespace viewplan
