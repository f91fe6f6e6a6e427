#pragma once

#include <array>

#include "viewplan/actions.hpp"
#include "viewplan/se3.hpp"

namespace viewplan {

/// d_pos / s_t + d_rot / s_r.
double pose_error(const Pose& p, const Pose& target, const StepSizes& steps = {});

/// Planner axes in processing order. Each pairs a positive and a negative action.
enum class PlanAxis { Yaw, Pitch, Roll, Forward, Right, Up };
inline constexpr std::size_t kPlanAxisCount = 6;

struct AxisActions {
  Action positive;
  Action negative;
};
AxisActions axis_actions(PlanAxis axis);

struct PlannerConfig {
  StepSizes steps;
  int k_max_rotation = 12;
  int k_max_translation = 10;
  double step_penalty = 0.01;  // added per committed step inside the argmin
  bool snap = true;
};

struct PlanResult {
  ActionSequence actions;
  double initial_error = 0.0;
  double final_error = 0.0;
  std::array<int, kPlanAxisCount> axis_steps{};          // signed k* per axis, 0 if not committed
  std::array<double, kPlanAxisCount> error_after_axis{};  // pose error after each axis
};

/// Single-pass greedy planner: for each axis in order, pick the signed step
/// count minimizing error + penalty*|k| and commit it only if the error
/// strictly drops. Ties go to the smaller |k|, then to the positive direction.
PlanResult plan_actions(const Pose& init, const Pose& target, const PlannerConfig& cfg = {});

}  // namespace viewplan
