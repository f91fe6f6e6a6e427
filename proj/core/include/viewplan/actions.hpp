#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "viewplan/se3.hpp"

namespace viewplan {

enum class Action : std::uint8_t {
  MoveForward,
  MoveBackward,
  MoveLeft,
  MoveRight,
  MoveUp,
  MoveDown,
  TurnLeft,
  TurnRight,
  LookUp,
  LookDown,
  RotateCcw,
  RotateCw,
};

enum class ActionCategory : std::uint8_t { Translation, Rotation };

inline constexpr std::size_t kActionCount = 12;
inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::MoveForward, Action::MoveBackward, Action::MoveLeft,  Action::MoveRight,
    Action::MoveUp,      Action::MoveDown,     Action::TurnLeft,  Action::TurnRight,
    Action::LookUp,      Action::LookDown,     Action::RotateCcw, Action::RotateCw,
};

using ActionSequence = std::vector<Action>;

std::string_view to_string(Action a);
std::optional<Action> parse_action(std::string_view name);
ActionCategory category(Action a);
Action inverse(Action a);

/// Camera-local axis (0 = X, 1 = Y, 2 = Z) and sign of the action's motion.
struct ActionAxis {
  int axis;
  int sign;
};
ActionAxis action_axis(Action a);

/// Deterministic transition. Translations move s_t along the camera axis; rotations
/// turn s_r about the camera axis. With `snap`, orientations stay on the Euler grid.
Pose apply_action(const Pose& p, Action a, const StepSizes& steps = {}, bool snap = true);

struct SequenceResult {
  Pose final_pose;
  std::vector<Pose> intermediates;  // pose after each action
};

SequenceResult apply_sequence(const Pose& p, std::span<const Action> seq,
                              const StepSizes& steps = {}, bool snap = true);
Pose execute(const Pose& p, std::span<const Action> seq, const StepSizes& steps = {},
             bool snap = true);

ActionSequence invert_sequence(std::span<const Action> seq);

/// "turn_left|move_forward"
std::string join_actions(std::span<const Action> seq, std::string_view sep = "|");
std::vector<std::string> action_names(std::span<const Action> seq);
/// Throws std::invalid_argument on unknown names.
ActionSequence actions_from_names(std::span<const std::string> names);

}  // namespace viewplan
