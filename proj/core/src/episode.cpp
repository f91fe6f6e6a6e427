#include "viewplan/episode.hpp"

#include <charconv>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <fmt/format.h>

#include "viewplan/image_io.hpp"
#include "viewplan/random.hpp"

namespace viewplan {

std::string_view to_string(ProtocolVariant v) {
  switch (v) {
    case ProtocolVariant::Default: return "default";
    case ProtocolVariant::NoSnap: return "no-snap";
    case ProtocolVariant::NoSubmit: return "no-submit";
  }
  return "?";
}

std::optional<ProtocolVariant> parse_variant(std::string_view name) {
  if (name == "default") return ProtocolVariant::Default;
  if (name == "no-snap" || name == "nosnap") return ProtocolVariant::NoSnap;
  if (name == "no-submit" || name == "nosubmit") return ProtocolVariant::NoSubmit;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Response grammar

namespace {

constexpr std::string_view kWs = " \t\r\n";

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(kWs);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(kWs) - b + 1);
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

ParsedResponse fail(std::string why) { return {std::nullopt, std::move(why)}; }

std::optional<std::string> parse_answer(std::string_view payload, PoseVector& out) {
  payload.remove_prefix(std::string_view("answer").size());
  payload = trim(payload);
  if (payload.size() < 2 || payload.front() != '(' || payload.back() != ')') return "malformed answer";
  payload = payload.substr(1, payload.size() - 2);
  std::vector<std::string_view> parts;
  for (std::size_t start = 0;;) {
    const auto comma = payload.find(',', start);
    parts.push_back(trim(payload.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 6) return fmt::format("answer needs 6 numbers, got {}", parts.size());
  for (std::size_t i = 0; i < 6; ++i) {
    std::string_view p = parts[i];
    if (!p.empty() && p.front() == '+') p.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
    if (p.empty() || ec != std::errc() || ptr != p.data() + p.size()) {
      return fmt::format("bad number '{}' in answer", parts[i]);
    }
    if (!std::isfinite(v)) return "non-finite number in answer";
    out[i] = v;
  }
  return std::nullopt;
}

}  // namespace

ParsedResponse parse_response(std::string_view text) {
  AgentResponse r;
  r.raw = std::string(text);
  std::string_view s = trim(text);

  constexpr std::string_view kThinkOpen = "<think>", kThinkClose = "</think>";
  constexpr std::string_view kOpen = "<action>", kClose = "</action>";
  if (s.starts_with(kThinkOpen)) {
    const auto end = s.find(kThinkClose);
    if (end == std::string_view::npos) return fail("unterminated think block");
    r.think = std::string(s.substr(kThinkOpen.size(), end - kThinkOpen.size()));
    s = trim(s.substr(end + kThinkClose.size()));
  }
  const std::size_t blocks = count_of(s, kOpen);
  if (blocks == 0) return fail("missing action block");
  if (blocks > 1) return fail("multiple action blocks");
  if (!s.starts_with(kOpen)) return fail("unexpected text before action block");
  const auto end = s.find(kClose);
  if (end == std::string_view::npos) return fail("unterminated action block");
  if (!trim(s.substr(end + kClose.size())).empty()) return fail("unexpected text after action block");
  const std::string_view payload = trim(s.substr(kOpen.size(), end - kOpen.size()));
  if (payload.empty()) return fail("empty action block");

  if (payload.starts_with("answer")) {
    PoseVector v{};
    if (auto err = parse_answer(payload, v)) return fail(*err);
    r.answer = v;
    return {std::move(r), {}};
  }
  for (std::size_t start = 0;;) {
    const auto bar = payload.find('|', start);
    const std::string_view name = trim(payload.substr(start, bar == std::string_view::npos ? bar : bar - start));
    if (name.empty()) return fail("empty action name");
    const auto a = parse_action(name);
    if (!a) return fail(fmt::format("unknown action '{}'", name));
    r.actions.push_back(*a);
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  if (r.actions.size() > kMaxActionsPerTurn) {
    return fail(fmt::format("too many actions ({} > {})", r.actions.size(), kMaxActionsPerTurn));
  }
  return {std::move(r), {}};
}

// ---------------------------------------------------------------------------
// Instances and outcomes

EpisodeInstance episode_instance_from_json(const json& j) {
  EpisodeInstance inst;
  inst.instance_id = j.value("instance_id", std::string());
  inst.scene_id = j.at("scene_id").get<std::string>();
  inst.init = pose_from_json(j.at("init_pose"));
  inst.target = pose_from_json(j.at("target_pose"));
  if (j.contains("gt_actions")) inst.gt_actions = actions_from_json(j.at("gt_actions"));
  inst.budget = j.value("budget", inst.budget);
  if (j.contains("steps")) {
    inst.steps.translation = j["steps"].value("translation", inst.steps.translation);
    inst.steps.rotation_deg = j["steps"].value("rotation_deg", inst.steps.rotation_deg);
  }
  if (j.contains("thresholds")) {
    const json& t = j["thresholds"];
    inst.thresholds.beta_t = t.value("position_m", inst.steps.translation) / inst.steps.translation;
    inst.thresholds.beta_r = t.value("rotation_deg", inst.steps.rotation_deg) / inst.steps.rotation_deg;
  }
  if (inst.budget < 0) throw std::invalid_argument("budget must be >= 0");
  return inst;
}

json to_json(const EpisodeOutcome& o) {
  return {{"success", o.success}, {"d_pos", o.d_pos},         {"d_rot", o.d_rot},
          {"reward", o.reward},   {"format_ok", o.format_ok}, {"turns", o.turns},
          {"termination", o.termination}};
}

// ---------------------------------------------------------------------------
// Episode

Episode::Episode(EpisodeInstance instance, ProtocolVariant variant)
    : instance_(std::move(instance)), variant_(variant), pose_(instance_.init) {
  if (instance_.budget <= 0) finish(false, view_distance(pose_, instance_.target, instance_.steps), false, "budget");
}

void Episode::finish(bool success, const ViewDistance& d, bool format_ok, std::string termination) {
  EpisodeOutcome o;
  o.success = success;
  o.d_pos = d.position;
  o.d_rot = d.rotation_deg;
  o.format_ok = format_ok;
  o.reward = (success ? 1.0 : 0.0) + (format_ok ? 0.1 : 0.0);
  o.turns = turn();
  o.termination = std::move(termination);
  outcome_ = o;
}

void Episode::step(std::string_view response) {
  if (terminal()) throw std::logic_error("step on a terminal episode");
  const StepSizes& steps = instance_.steps;
  const SuccessThresholds& thr = instance_.thresholds;
  TurnRecord rec;
  rec.turn = turn() + 1;
  rec.response = std::string(response);
  const ParsedResponse parsed = parse_response(response);
  rec.format_ok = parsed.ok();
  rec.parse_error = parsed.error;

  auto commit = [&] {
    rec.pose = pose_;
    history_.push_back(std::move(rec));
  };

  if (!parsed.ok()) {
    commit();
    if (budget_remaining() <= 0) finish(false, view_distance(pose_, instance_.target, steps), false, "budget");
    return;
  }
  const AgentResponse& r = *parsed.response;
  if (r.answer) {
    rec.answer = r.answer;
    commit();
    // The estimate is a free 6-DoF guess: scored as given, never snapped.
    const ViewDistance d = view_distance(from_vector(*r.answer), instance_.target, steps);
    finish(within_thresholds(d, thr.beta_t * steps.translation, thr.beta_r * steps.rotation_deg), d, true, "answer");
    return;
  }
  const bool snap = variant_ != ProtocolVariant::NoSnap;
  for (Action a : r.actions) {
    pose_ = apply_action(pose_, a, steps, snap);
    rec.actions.push_back(a);
    if (variant_ == ProtocolVariant::NoSubmit && is_success(pose_, instance_.target, steps, thr)) {
      commit();
      finish(true, view_distance(pose_, instance_.target, steps), true, "threshold");
      return;
    }
  }
  commit();
  if (budget_remaining() <= 0) finish(false, view_distance(pose_, instance_.target, steps), true, "budget");
}

void Episode::abort(const std::string& reason) {
  if (terminal()) return;
  abort_reason_ = reason;
  finish(false, view_distance(pose_, instance_.target, instance_.steps), false, "aborted");
}

Pose replay_pose(const EpisodeInstance& inst, const std::vector<TurnRecord>& history, ProtocolVariant variant) {
  Pose p = inst.init;
  for (const auto& t : history) p = execute(p, t.actions, inst.steps, variant != ProtocolVariant::NoSnap);
  return p;
}

Episode rescore(const EpisodeInstance& inst, const std::vector<std::string>& responses, ProtocolVariant variant) {
  Episode ep(inst, variant);
  for (const auto& r : responses) {
    if (ep.terminal()) break;
    ep.step(r);
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Agents

std::string format_answer(const Pose& p) {
  const PoseVector v = to_vector(p);
  return fmt::format("<action>answer({}, {}, {}, {}, {}, {})</action>", v[0], v[1], v[2], v[3], v[4], v[5]);
}

std::string format_actions(std::span<const Action> seq) { return "<action>" + join_actions(seq, "|") + "</action>"; }

Agent oracle_agent(const EpisodeInstance& inst) {
  return [gt = inst.gt_actions](const Observation& obs) {
    const std::size_t begin = static_cast<std::size_t>(obs.turn) * kMaxActionsPerTurn;
    // Leave the last turn for the answer.
    if (begin < gt.size() && obs.budget_remaining > 1) {
      const std::size_t n = std::min(kMaxActionsPerTurn, gt.size() - begin);
      return format_actions(std::span(gt).subspan(begin, n));
    }
    return format_answer(obs.pose);
  };
}

Agent random_agent(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const Observation& obs) {
    if (obs.budget_remaining <= 1 || uniform01(*rng) < 0.1) return format_answer(obs.pose);
    ActionSequence seq(1 + uniform_index(*rng, 3));
    for (Action& a : seq) a = kAllActions[uniform_index(*rng, kActionCount)];
    return format_actions(seq);
  };
}

// ---------------------------------------------------------------------------
// Rollouts

std::string view_id(const RenderedView& view) { return sha256_hex(view.rgb).substr(0, 16); }

std::vector<json> RolloutLog::to_jsonl() const {
  std::vector<json> out;
  const json head = {{"episode_id", episode_id},
                     {"instance_id", instance.instance_id},
                     {"scene_id", instance.scene_id},
                     {"variant", to_string(variant)}};
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const TurnRecord& t = turns[i];
    const ViewDistance d = view_distance(t.pose, instance.target, instance.steps);
    const bool last = i + 1 == turns.size();
    json j = head;
    j["type"] = "turn";
    j["turn"] = t.turn;
    j["request_images"] = i < request_images.size() ? request_images[i] : std::vector<std::string>{};
    j["response"] = t.response;
    j["format_ok"] = t.format_ok;
    j["parse_error"] = t.parse_error;
    j["actions"] = actions_to_json(t.actions);
    j["answer"] = t.answer ? json(*t.answer) : json(nullptr);
    j["pose"] = pose_to_json(t.pose);
    j["reward"] = last ? outcome.reward : 0.0;
    j["success"] = last && outcome.success;
    j["d_pos"] = d.position;
    j["d_rot"] = d.rotation_deg;
    out.push_back(std::move(j));
  }
  json o = head;
  o["type"] = "outcome";
  o["init_pose"] = pose_to_json(instance.init);
  o["target_pose"] = pose_to_json(instance.target);
  o.update(to_json(outcome));
  out.push_back(std::move(o));
  return out;
}

RolloutLog run_episode(const EpisodeInstance& inst, const Agent& agent, ProtocolVariant variant,
                       const std::string& episode_id, const EpisodeViews& views) {
  Episode ep(inst, variant);
  RolloutLog log;
  log.episode_id = episode_id;
  log.instance = inst;
  log.variant = variant;

  RenderedView current, target, topdown;
  std::string target_id, topdown_id;
  if (views.scene) {
    target = render_view(*views.scene, inst.target, views.intrinsics);
    topdown = render_view(*views.scene, topdown_pose(*views.scene, views.intrinsics), views.intrinsics);
    target_id = view_id(target);
    topdown_id = view_id(topdown);
  }
  while (!ep.terminal()) {
    Observation obs;
    obs.episode_id = episode_id;
    obs.turn = ep.turn();
    obs.pose = ep.pose();
    obs.budget_remaining = ep.budget_remaining();
    std::vector<std::string> ids;
    if (views.scene) {
      current = render_view(*views.scene, ep.pose(), views.intrinsics);
      obs.current_view = &current;
      obs.target_view = &target;
      obs.current_view_id = view_id(current);
      obs.target_view_id = target_id;
      ids = {obs.current_view_id, target_id};
      if (obs.turn == 0) {
        obs.topdown_view = &topdown;
        obs.topdown_view_id = topdown_id;
        ids.push_back(topdown_id);
      }
    }
    std::string response;
    try {
      response = agent(obs);
    } catch (const std::exception& e) {
      ep.abort(std::string("agent failure: ") + e.what());
      break;
    }
    log.request_images.push_back(std::move(ids));
    ep.step(response);
  }
  log.turns = ep.history();
  log.outcome = *ep.outcome();
  return log;
}

}  // namespace viewplan
