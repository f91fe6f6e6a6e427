#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "viewplan/actions.hpp"
#include "viewplan/json_io.hpp"
#include "viewplan/render.hpp"
#include "viewplan/scene.hpp"
#include "viewplan/se3.hpp"

namespace viewplan {

enum class ProtocolVariant { Default, NoSnap, NoSubmit };

std::string_view to_string(ProtocolVariant v);
std::optional<ProtocolVariant> parse_variant(std::string_view name);

inline constexpr std::size_t kMaxActionsPerTurn = 10;

struct AgentResponse {
  std::string raw;
  std::optional<std::string> think;
  ActionSequence actions;             // empty iff answer is set
  std::optional<PoseVector> answer;   // [tx, ty, tz, rx, ry, rz]
};

struct ParsedResponse {
  std::optional<AgentResponse> response;
  std::string error;  // set iff response is empty
  [[nodiscard]] bool ok() const { return response.has_value(); }
};

/// Grammar: ws [<think>...</think>] ws <action> payload </action> ws, where payload
/// is `name | name | ...` (1..10 names) or `answer(n, n, n, n, n, n)`.
ParsedResponse parse_response(std::string_view text);

/// What an IVP episode needs from a manifest line.
struct EpisodeInstance {
  std::string instance_id;
  std::string scene_id;
  Pose init;
  Pose target;
  ActionSequence gt_actions;
  int budget = 10;
  StepSizes steps;
  SuccessThresholds thresholds;
};

/// Reads an IVP (or any pair-carrying) manifest line.
EpisodeInstance episode_instance_from_json(const json& j);

struct EpisodeOutcome {
  bool success = false;
  double d_pos = 0.0;
  double d_rot = 0.0;
  double reward = 0.0;
  bool format_ok = false;
  int turns = 0;
  std::string termination;  // answer | threshold | budget | aborted
};

json to_json(const EpisodeOutcome& o);

struct TurnRecord {
  int turn = 0;  // 1-based
  std::string response;
  bool format_ok = false;
  std::string parse_error;
  ActionSequence actions;  // actions actually executed this turn
  std::optional<PoseVector> answer;
  Pose pose;  // camera pose after the turn
};

/// The IVP decision process for one instance, without rendering.
class Episode {
 public:
  Episode(EpisodeInstance instance, ProtocolVariant variant);

  /// Consumes one agent response. Throws std::logic_error once terminal.
  void step(std::string_view response);
  /// Ends the episode as a failure (e.g. the agent callback failed).
  void abort(const std::string& reason);

  [[nodiscard]] const EpisodeInstance& instance() const { return instance_; }
  [[nodiscard]] ProtocolVariant variant() const { return variant_; }
  [[nodiscard]] const Pose& pose() const { return pose_; }
  [[nodiscard]] int turn() const { return static_cast<int>(history_.size()); }
  [[nodiscard]] int budget_remaining() const { return instance_.budget - turn(); }
  [[nodiscard]] bool terminal() const { return outcome_.has_value(); }
  [[nodiscard]] const std::optional<EpisodeOutcome>& outcome() const { return outcome_; }
  [[nodiscard]] const std::vector<TurnRecord>& history() const { return history_; }
  [[nodiscard]] const std::string& abort_reason() const { return abort_reason_; }

 private:
  void finish(bool success, const ViewDistance& d, bool format_ok, std::string termination);

  EpisodeInstance instance_;
  ProtocolVariant variant_;
  Pose pose_;
  std::vector<TurnRecord> history_;
  std::optional<EpisodeOutcome> outcome_;
  std::string abort_reason_;
};

/// Pose after replaying every logged action from init under the variant's snapping rule.
Pose replay_pose(const EpisodeInstance& inst, const std::vector<TurnRecord>& history, ProtocolVariant variant);

/// Re-runs a logged sequence of raw responses under another variant.
Episode rescore(const EpisodeInstance& inst, const std::vector<std::string>& responses, ProtocolVariant variant);

struct Observation {
  std::string episode_id;
  int turn = 0;  // responses consumed so far
  Pose pose;
  int budget_remaining = 0;
  std::string current_view_id;
  std::string target_view_id;
  std::string topdown_view_id;  // turn 0 only
  const RenderedView* current_view = nullptr;
  const RenderedView* target_view = nullptr;
  const RenderedView* topdown_view = nullptr;
};

/// Returns the raw response text. Exceptions abort the episode.
using Agent = std::function<std::string(const Observation&)>;

/// Replays the ground truth in one turn, then answers its own pose.
Agent oracle_agent(const EpisodeInstance& inst);
/// Random actions each turn; submits its current pose with probability 0.1 per turn and on the last turn.
Agent random_agent(std::uint64_t seed);

/// Formats an answer block with round-trip precision.
std::string format_answer(const Pose& p);
std::string format_actions(std::span<const Action> seq);

struct EpisodeViews {
  const Scene* scene = nullptr;
  CameraIntrinsics intrinsics;
};

struct RolloutLog {
  std::string episode_id;
  EpisodeInstance instance;
  ProtocolVariant variant = ProtocolVariant::Default;
  std::vector<TurnRecord> turns;
  std::vector<std::vector<std::string>> request_images;  // per turn
  EpisodeOutcome outcome;

  /// One line per turn plus a final outcome line.
  [[nodiscard]] std::vector<json> to_jsonl() const;
};

/// View ids are content hashes (first 16 hex digits of the RGB SHA-256).
std::string view_id(const RenderedView& view);

/// Drives observe -> respond to termination. Views are rendered only when `views.scene` is set.
RolloutLog run_episode(const EpisodeInstance& inst, const Agent& agent, ProtocolVariant variant,
                       const std::string& episode_id, const EpisodeViews& views = {});

}  // namespace viewplan
