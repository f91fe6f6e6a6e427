#include <random>
#include <set>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "viewplan/actions.hpp"
#include "viewplan/orientation_grid.hpp"

namespace viewplan {
namespace {

TEST(Actions, NamesRoundTripAndInversePairs) {
  std::set<std::string_view> names;
  for (Action a : kAllActions) {
    names.insert(to_string(a));
    EXPECT_EQ(parse_action(to_string(a)), a);
    EXPECT_EQ(inverse(inverse(a)), a);
    EXPECT_NE(inverse(a), a);
    EXPECT_EQ(category(inverse(a)), category(a));
  }
  EXPECT_EQ(names.size(), kActionCount);
  EXPECT_FALSE(parse_action("fly_up"));
  EXPECT_EQ(inverse(Action::TurnLeft), Action::TurnRight);
  EXPECT_EQ(inverse(Action::LookUp), Action::LookDown);
  EXPECT_EQ(inverse(Action::RotateCcw), Action::RotateCw);
  EXPECT_EQ(inverse(Action::MoveUp), Action::MoveDown);
}

TEST(Actions, MoveForwardFromIdentity) {
  const Pose p = apply_action(Pose{}, Action::MoveForward);
  EXPECT_TRUE(p.position.isApprox(Eigen::Vector3d(0, 0, 0.5)));
  EXPECT_EQ(p.rotation, Eigen::Matrix3d::Identity());
}

TEST(Actions, MoveUpIsScreenUp) {
  const Pose p = apply_action(Pose{}, Action::MoveUp);
  EXPECT_TRUE(p.position.isApprox(Eigen::Vector3d(0, -0.5, 0)));
}

TEST(Actions, LookDownIsNegativePitch) {
  const Pose p = apply_action(Pose{}, Action::LookDown);
  const EulerAngles e = euler_decompose(p).angles;
  EXPECT_NEAR(e.rx, -30.0, 1e-9);
  EXPECT_NEAR(e.ry, 0.0, 1e-9);
  EXPECT_NEAR(e.rz, 0.0, 1e-9);
  // Optical axis tilts toward screen-down (+Y).
  EXPECT_GT(p.rotation.col(2).y(), 0.0);
}

TEST(Actions, TurnRightSwingsOpticalAxisRight) {
  const Pose p = apply_action(Pose{}, Action::TurnRight);
  EXPECT_GT(p.rotation.col(2).x(), 0.0);
  const Pose q = apply_action(Pose{}, Action::TurnLeft);
  EXPECT_LT(q.rotation.col(2).x(), 0.0);
}

TEST(Actions, FiveTurnsIs150Degrees) {
  const ActionSequence seq(5, Action::TurnRight);
  const SequenceResult r = apply_sequence(Pose{}, seq);
  ASSERT_EQ(r.intermediates.size(), 5u);
  EXPECT_NEAR(view_distance(Pose{}, r.final_pose).rotation_deg, 150.0, 1e-9);
}

TEST(Actions, EmptySequenceIsIdentity) {
  const Pose p = euler_compose({30, 60, -90}, {1, 2, 3});
  const SequenceResult r = apply_sequence(p, {});
  EXPECT_EQ(r.final_pose, p);
  EXPECT_TRUE(r.intermediates.empty());
}

TEST(Actions, InvertSequence) {
  EXPECT_TRUE(invert_sequence({}).empty());
  const ActionSequence seq{Action::MoveForward, Action::TurnLeft};
  const ActionSequence expected{Action::TurnRight, Action::MoveBackward};
  EXPECT_EQ(invert_sequence(seq), expected);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const ActionSequence s = testing::random_actions(rng, 1 + i % 9);
    EXPECT_EQ(invert_sequence(invert_sequence(s)), s);
  }
}

TEST(Actions, SingleStepInverseOnGrid) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = testing::random_grid_pose(rng);
    for (Action a : kAllActions) {
      const Pose back = apply_action(apply_action(p, a), inverse(a));
      EXPECT_LT((back.position - p.position).norm(), 1e-9);
      EXPECT_LT(rotation_distance_deg(back.rotation, p.rotation), 1e-9);
    }
  }
}

TEST(Actions, SequenceThenInverseReturnsHome) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = testing::random_grid_pose(rng);
    const ActionSequence seq = testing::random_actions(rng, 8);
    const Pose there = execute(p, seq);
    const Pose back = execute(there, invert_sequence(seq));
    ASSERT_LT((back.position - p.position).norm(), 1e-6) << join_actions(seq);
    ASSERT_LT(rotation_distance_deg(back.rotation, p.rotation), 1e-6) << join_actions(seq);
  }
}

TEST(Actions, GridClosure) {
  std::mt19937_64 rng(4);
  Pose p = testing::random_grid_pose(rng);
  for (int i = 0; i < 2000; ++i) {
    p = apply_action(p, testing::random_actions(rng, 1)[0]);
    ASSERT_TRUE(is_grid_aligned(p));
    ASSERT_TRUE(p.is_valid());
  }
}

TEST(Actions, Deterministic) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const Pose p = testing::random_pose(rng);
    const ActionSequence seq = testing::random_actions(rng, 6);
    for (bool snap : {true, false}) {
      const Pose a = execute(p, seq, {}, snap);
      const Pose b = execute(p, seq, {}, snap);
      EXPECT_EQ(a, b);
    }
  }
}

TEST(Actions, TranslationsCommuteRotationsDoNot) {
  const Pose p = euler_compose({30, -60, 90}, {1, 1, 1});
  const Pose ab = execute(p, ActionSequence{Action::MoveForward, Action::MoveLeft});
  const Pose ba = execute(p, ActionSequence{Action::MoveLeft, Action::MoveForward});
  EXPECT_LT((ab.position - ba.position).norm(), 1e-12);
  const Pose rt = execute(Pose{}, ActionSequence{Action::TurnRight, Action::MoveForward});
  const Pose tr = execute(Pose{}, ActionSequence{Action::MoveForward, Action::TurnRight});
  EXPECT_GT((rt.position - tr.position).norm(), 0.1);
}

TEST(Actions, NoSnapIsExactLocalRotation) {
  const Pose p = euler_compose({10, 20, 30}, Eigen::Vector3d::Zero());
  const Pose q = apply_action(p, Action::LookUp, {}, false);
  EXPECT_TRUE(q.rotation.isApprox(p.rotation * axis_rotation(0, 30.0), 1e-12));
  EXPECT_FALSE(is_grid_aligned(q));
}

TEST(Actions, OffGridSnapRoundsAfterRotation) {
  const Pose p = euler_compose({0, 10, 0}, Eigen::Vector3d::Zero());
  const Pose q = apply_action(p, Action::TurnRight);
  EXPECT_NEAR(euler_decompose(q).angles.ry, 30.0, 1e-9);  // 40 snaps to 30
}

TEST(OrientationGrid, PermutationsAreBijectiveAndRollIsExact) {
  const OrientationGrid* grid = OrientationGrid::for_step(30.0);
  ASSERT_NE(grid, nullptr);
  EXPECT_EQ(grid->size(), 744u);
  for (int axis = 0; axis < 3; ++axis) {
    std::set<std::size_t> image;
    for (std::size_t i = 0; i < grid->size(); ++i) {
      const std::size_t j = grid->step(i, axis, +1);
      image.insert(j);
      EXPECT_EQ(grid->step(j, axis, -1), i);
      EXPECT_LT(grid->assignment_error_deg(i, axis, +1), 30.0);
      if (axis == 2) EXPECT_LT(grid->assignment_error_deg(i, axis, +1), 1e-6);
    }
    EXPECT_EQ(image.size(), grid->size());
  }
  EXPECT_EQ(OrientationGrid::for_step(25.0), nullptr);
}

TEST(OrientationGrid, AssignmentSolverFindsOptimum) {
  // 3x3 with a unique optimum off the diagonal.
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto match = solve_assignment(cost, 3);
  EXPECT_EQ(match, (std::vector<std::size_t>{1, 0, 2}));
}

}  // namespace
}  // namespace viewplan
