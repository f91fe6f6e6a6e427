#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "viewplan/se3.hpp"

namespace viewplan {
namespace {

TEST(ViewDistance, IdenticalPosesAreZero) {
  const Pose p = euler_compose({10, 20, 30}, {1, 2, 3});
  const ViewDistance d = view_distance(p, p);
  EXPECT_EQ(d.position, 0.0);
  EXPECT_NEAR(d.rotation_deg, 0.0, 1e-12);
  EXPECT_NEAR(d.unified, 0.0, 1e-12);
}

TEST(ViewDistance, ThreeFourFive) {
  const Pose a;
  const Pose b{Eigen::Vector3d(3, 4, 0), Eigen::Matrix3d::Identity()};
  EXPECT_DOUBLE_EQ(view_distance(a, b).position, 5.0);
}

TEST(ViewDistance, SingleYawStep) {
  const Pose a;
  const Pose b{Eigen::Vector3d::Zero(), axis_rotation(1, 30.0)};
  const ViewDistance d = view_distance(a, b);
  EXPECT_EQ(d.position, 0.0);
  EXPECT_NEAR(d.rotation_deg, 30.0, 1e-9);
  EXPECT_NEAR(d.unified, 1.0, 1e-9);
}

TEST(ViewDistance, OneStepEachIsSqrtTwo) {
  const Pose a;
  const Pose b{Eigen::Vector3d(0.5, 0, 0), axis_rotation(2, 30.0)};
  EXPECT_NEAR(view_distance(a, b).unified, std::sqrt(2.0), 1e-9);
}

TEST(ViewDistance, SingleAxisGeodesicEqualsAngle) {
  for (int axis = 0; axis < 3; ++axis) {
    for (double theta = -180.0; theta <= 180.0; theta += 7.5) {
      const double d = rotation_distance_deg(Eigen::Matrix3d::Identity(), axis_rotation(axis, theta));
      EXPECT_NEAR(d, std::abs(theta), 1e-9) << "axis " << axis << " theta " << theta;
    }
  }
}

TEST(ViewDistance, SymmetricAndNeverNaN) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10000; ++i) {
    const Pose a = testing::random_pose(rng);
    const Pose b = testing::random_pose(rng);
    const ViewDistance ab = view_distance(a, b);
    const ViewDistance ba = view_distance(b, a);
    ASSERT_FALSE(std::isnan(ab.rotation_deg));
    ASSERT_FALSE(std::isnan(ab.unified));
    EXPECT_NEAR(ab.position, ba.position, 1e-12);
    EXPECT_NEAR(ab.rotation_deg, ba.rotation_deg, 1e-9);
    EXPECT_GE(ab.rotation_deg, 0.0);
    EXPECT_LE(ab.rotation_deg, 180.0);
  }
}

TEST(Success, InclusiveBoundary) {
  const Pose target;
  EXPECT_TRUE(is_success(target, target));
  const Pose edge{Eigen::Vector3d(0.5, 0, 0), axis_rotation(1, 30.0)};
  EXPECT_TRUE(is_success(edge, target));
  const Pose past{Eigen::Vector3d(0.51, 0, 0), Eigen::Matrix3d::Identity()};
  EXPECT_FALSE(is_success(past, target));
  const Pose rot_past{Eigen::Vector3d::Zero(), axis_rotation(0, 30.5)};
  EXPECT_FALSE(is_success(rot_past, target));
}

TEST(Success, MonotoneInDistances) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double dp = u(rng) * 0.8;
    const double dr = u(rng) * 50.0;
    const Pose target;
    const Pose est{Eigen::Vector3d(dp, 0, 0), axis_rotation(2, dr)};
    const Pose closer{Eigen::Vector3d(dp * u(rng), 0, 0), axis_rotation(2, dr * u(rng))};
    if (is_success(est, target)) EXPECT_TRUE(is_success(closer, target));
  }
}

TEST(Euler, IdentityAndPureYaw) {
  const EulerDecomposition id = euler_decompose(Eigen::Matrix3d::Identity());
  EXPECT_EQ(id.angles, (EulerAngles{0, 0, 0}));
  EXPECT_FALSE(id.gimbal_locked);
  const EulerAngles yaw = euler_decompose(axis_rotation(1, 30.0)).angles;
  EXPECT_NEAR(yaw.rx, 0.0, 1e-12);
  EXPECT_NEAR(yaw.ry, 30.0, 1e-12);
  EXPECT_NEAR(yaw.rz, 0.0, 1e-12);
}

TEST(Euler, RoundTripAwayFromLock) {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(-80.0, 80.0);
  for (int i = 0; i < 1000; ++i) {
    const EulerAngles e{u(rng), u(rng), u(rng)};
    const EulerDecomposition d = euler_decompose(euler_to_matrix(e));
    ASSERT_FALSE(d.gimbal_locked);
    EXPECT_NEAR(d.angles.rx, e.rx, 1e-6);
    EXPECT_NEAR(d.angles.ry, e.ry, 1e-6);
    EXPECT_NEAR(d.angles.rz, e.rz, 1e-6);
  }
}

TEST(Euler, ComposeOfDecomposeReproducesRotation) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Matrix3d r = testing::random_rotation(rng);
    const EulerDecomposition d = euler_decompose(r);
    EXPECT_LT(rotation_distance_deg(r, euler_to_matrix(d.angles)), 1e-6);
  }
}

TEST(Euler, GimbalLockFoldsIntoRx) {
  for (double pitch : {90.0, -90.0}) {
    const Eigen::Matrix3d r = euler_to_matrix({20.0, pitch, 40.0});
    const EulerDecomposition d = euler_decompose(r);
    EXPECT_TRUE(d.gimbal_locked);
    EXPECT_EQ(d.angles.rz, 0.0);
    EXPECT_LT(rotation_distance_deg(r, euler_to_matrix(d.angles)), 1e-6);
  }
}

TEST(Snap, NearestMultipleWithHalfUp) {
  const Pose p44 = euler_compose({0, 44, 0}, Eigen::Vector3d::Zero());
  EXPECT_NEAR(euler_decompose(snap_orientation(p44)).angles.ry, 30.0, 1e-9);
  const Pose p45 = euler_compose({0, 45, 0}, Eigen::Vector3d::Zero());
  EXPECT_NEAR(euler_decompose(snap_orientation(p45)).angles.ry, 60.0, 1e-9);
  EXPECT_EQ(snap_angle(-45.0, 30.0), -30.0);
  EXPECT_EQ(snap_angle(-15.0, 30.0), 0.0);
  EXPECT_EQ(snap_angle(-180.0, 30.0), 180.0);
}

TEST(Snap, KeepsPositionAndIsIdempotent) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Pose p = testing::random_pose(rng);
    const Pose s1 = snap_orientation(p);
    const Pose s2 = snap_orientation(s1);
    EXPECT_EQ(s1.position, p.position);
    EXPECT_EQ(s1.rotation, s2.rotation);
    EXPECT_TRUE(is_grid_aligned(s1));
    EXPECT_TRUE(s1.is_valid());
  }
}

TEST(Serialization, VectorAndMatrixForms) {
  const Pose p = euler_compose({-90, 0, -120}, {4.07, 3.28, 1.66});
  const PoseVector v = to_vector(p);
  EXPECT_NEAR(v[3], -90.0, 1e-9);
  EXPECT_NEAR(v[5], -120.0, 1e-9);
  const Pose back = from_vector(v);
  EXPECT_LT(view_distance(p, back).unified, 1e-9);
  const Pose from_m = from_matrix4(to_matrix4(p));
  EXPECT_LT(view_distance(p, from_m).unified, 1e-9);
  EXPECT_EQ(format_pose_prompt(p), "[tx=4.07, ty=3.28, tz=1.66, rx=-90, ry=0, rz=-120]");
  EXPECT_LT(view_distance(parse_pose_vector("[4.07, 3.28, 1.66, -90, 0, -120]"), p).unified, 1e-9);
  EXPECT_THROW(parse_pose_vector("1 2 3"), std::invalid_argument);
  std::array<double, 16> bad{};
  EXPECT_THROW(from_matrix4(bad), std::invalid_argument);
}

TEST(Pose, Validity) {
  Pose p;
  EXPECT_TRUE(p.is_valid());
  p.rotation(0, 0) = -1.0;  // reflection
  EXPECT_FALSE(p.is_valid());
  Pose q;
  q.position.x() = std::nan("");
  EXPECT_FALSE(q.is_valid());
}

}  // namespace
}  // namespace viewplan
