#include "viewplan/actions.hpp"

#include <algorithm>
#include <stdexcept>

#include "viewplan/orientation_grid.hpp"

namespace viewplan {

namespace {

constexpr std::array<std::string_view, kActionCount> kNames = {
    "move_forward", "move_backward", "move_left",  "move_right", "move_up",    "move_down",
    "turn_left",    "turn_right",    "look_up",    "look_down",  "rotate_ccw", "rotate_cw",
};

}  // namespace

std::string_view to_string(Action a) { return kNames[static_cast<std::size_t>(a)]; }

std::optional<Action> parse_action(std::string_view name) {
  for (std::size_t i = 0; i < kActionCount; ++i) {
    if (kNames[i] == name) return static_cast<Action>(i);
  }
  return std::nullopt;
}

ActionCategory category(Action a) {
  return static_cast<std::size_t>(a) < 6 ? ActionCategory::Translation : ActionCategory::Rotation;
}

Action inverse(Action a) {
  // Actions are laid out in inverse pairs.
  const auto i = static_cast<std::uint8_t>(a);
  return static_cast<Action>(i ^ 1U);
}

ActionAxis action_axis(Action a) {
  switch (a) {
    case Action::MoveForward: return {2, +1};
    case Action::MoveBackward: return {2, -1};
    case Action::MoveLeft: return {0, -1};
    case Action::MoveRight: return {0, +1};
    case Action::MoveUp: return {1, -1};  // screen up is camera -Y
    case Action::MoveDown: return {1, +1};
    case Action::TurnLeft: return {1, -1};
    case Action::TurnRight: return {1, +1};
    case Action::LookUp: return {0, +1};
    case Action::LookDown: return {0, -1};
    case Action::RotateCcw: return {2, -1};
    case Action::RotateCw: return {2, +1};
  }
  throw std::invalid_argument("unknown action");
}

Pose apply_action(const Pose& p, Action a, const StepSizes& steps, bool snap) {
  const ActionAxis ax = action_axis(a);
  if (category(a) == ActionCategory::Translation) {
    return {p.position + p.rotation.col(ax.axis) * (steps.translation * ax.sign), p.rotation};
  }
  if (snap) {
    if (const OrientationGrid* grid = OrientationGrid::for_step(steps.rotation_deg)) {
      if (auto idx = grid->index_of(p.rotation)) {
        return {p.position, grid->rotation(grid->step(*idx, ax.axis, ax.sign))};
      }
    }
    const Pose rotated{p.position, p.rotation * axis_rotation(ax.axis, steps.rotation_deg * ax.sign)};
    return snap_orientation(rotated, steps);
  }
  return {p.position, p.rotation * axis_rotation(ax.axis, steps.rotation_deg * ax.sign)};
}

SequenceResult apply_sequence(const Pose& p, std::span<const Action> seq, const StepSizes& steps,
                              bool snap) {
  SequenceResult out{p, {}};
  out.intermediates.reserve(seq.size());
  for (Action a : seq) {
    out.final_pose = apply_action(out.final_pose, a, steps, snap);
    out.intermediates.push_back(out.final_pose);
  }
  return out;
}

Pose execute(const Pose& p, std::span<const Action> seq, const StepSizes& steps, bool snap) {
  Pose cur = p;
  for (Action a : seq) cur = apply_action(cur, a, steps, snap);
  return cur;
}

ActionSequence invert_sequence(std::span<const Action> seq) {
  ActionSequence out(seq.rbegin(), seq.rend());
  std::transform(out.begin(), out.end(), out.begin(), inverse);
  return out;
}

std::string join_actions(std::span<const Action> seq, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += sep;
    out += to_string(seq[i]);
  }
  return out;
}

std::vector<std::string> action_names(std::span<const Action> seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (Action a : seq) out.emplace_back(to_string(a));
  return out;
}

ActionSequence actions_from_names(std::span<const std::string> names) {
  ActionSequence out;
  out.reserve(names.size());
  for (const auto& n : names) {
    auto a = parse_action(n);
    if (!a) throw std::invalid_argument("unknown action: " + n);
    out.push_back(*a);
  }
  return out;
}

}  // namespace viewplan
