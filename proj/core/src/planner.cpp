#include "viewplan/planner.hpp"

#include <cstdlib>

namespace viewplan {

namespace {

// Objective values closer than this are treated as ties, so round-off cannot
// flip the documented tie-break.
constexpr double kTieTolerance = 1e-12;

}  // namespace

double pose_error(const Pose& p, const Pose& target, const StepSizes& steps) {
  const ViewDistance d = view_distance(p, target, steps);
  return d.position / steps.translation + d.rotation_deg / steps.rotation_deg;
}

AxisActions axis_actions(PlanAxis axis) {
  switch (axis) {
    case PlanAxis::Yaw: return {Action::TurnRight, Action::TurnLeft};
    case PlanAxis::Pitch: return {Action::LookUp, Action::LookDown};
    case PlanAxis::Roll: return {Action::RotateCw, Action::RotateCcw};
    case PlanAxis::Forward: return {Action::MoveForward, Action::MoveBackward};
    case PlanAxis::Right: return {Action::MoveRight, Action::MoveLeft};
    case PlanAxis::Up: return {Action::MoveUp, Action::MoveDown};
  }
  return {Action::MoveForward, Action::MoveBackward};
}

PlanResult plan_actions(const Pose& init, const Pose& target, const PlannerConfig& cfg) {
  PlanResult out;
  Pose cur = init;
  out.initial_error = pose_error(cur, target, cfg.steps);
  for (std::size_t ai = 0; ai < kPlanAxisCount; ++ai) {
    const auto axis = static_cast<PlanAxis>(ai);
    const AxisActions acts = axis_actions(axis);
    const int k_max = ai < 3 ? cfg.k_max_rotation : cfg.k_max_translation;
    const double e0 = pose_error(cur, target, cfg.steps);

    // Walk each direction incrementally; candidates are visited as
    // 0, +1, -1, +2, -2, ... so a strict '<' realizes the tie-break.
    std::vector<Pose> pos_walk{cur}, neg_walk{cur};
    for (int k = 1; k <= k_max; ++k) {
      pos_walk.push_back(apply_action(pos_walk.back(), acts.positive, cfg.steps, cfg.snap));
      neg_walk.push_back(apply_action(neg_walk.back(), acts.negative, cfg.steps, cfg.snap));
    }
    int best_k = 0;
    double best_err = e0;
    double best_obj = e0;
    for (int m = 1; m <= k_max; ++m) {
      for (int k : {m, -m}) {
        const Pose& cand = k > 0 ? pos_walk[static_cast<std::size_t>(m)] : neg_walk[static_cast<std::size_t>(m)];
        const double err = pose_error(cand, target, cfg.steps);
        const double obj = err + cfg.step_penalty * m;
        if (obj < best_obj - kTieTolerance) {
          best_obj = obj;
          best_err = err;
          best_k = k;
        }
      }
    }
    if (best_k != 0 && best_err < e0 - kTieTolerance) {
      const auto m = static_cast<std::size_t>(std::abs(best_k));
      out.actions.insert(out.actions.end(), m, best_k > 0 ? acts.positive : acts.negative);
      cur = best_k > 0 ? pos_walk[m] : neg_walk[m];
      out.axis_steps[ai] = best_k;
    }
    out.error_after_axis[ai] = pose_error(cur, target, cfg.steps);
  }
  out.final_error = pose_error(cur, target, cfg.steps);
  return out;
}

}  // namespace viewplan
