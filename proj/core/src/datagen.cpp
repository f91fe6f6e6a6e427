#include "viewplan/datagen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numbers>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "viewplan/image_io.hpp"

namespace viewplan {

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("pipeline config: " + why); };
  auto near_one = [](double s) { return std::abs(s - 1.0) < 1e-9; };
  if (delta.w_short < 0 || delta.w_mid < 0 || delta.w_other < 0 ||
      !near_one(delta.w_short + delta.w_mid + delta.w_other)) {
    fail("delta weights must be non-negative and sum to 1");
  }
  if (!(1 <= delta.short_lo && delta.short_lo <= delta.short_hi && delta.short_hi < delta.mid_lo &&
        delta.mid_lo <= delta.mid_hi)) {
    fail("delta ranges must be ordered and disjoint");
  }
  if (min_length < 1 || min_length > max_length) fail("length bounds must satisfy 1 <= min <= max");
  if (p_replace < 0 || p_remove < 0 || p_insert < 0 || !near_one(p_replace + p_remove + p_insert)) {
    fail("perturb op probabilities must be non-negative and sum to 1");
  }
  if (same_category_prob < 0 || same_category_prob > 1) fail("same_category_prob must be in [0, 1]");
  if (perturb_ratio <= 0 || perturb_ratio > 1) fail("perturb_ratio must be in (0, 1]");
  if (num_distractors < 0) fail("num_distractors must be >= 0");
  if (pixel_threshold < 0 || pixel_threshold >= 1) fail("pixel_threshold must be in [0, 1)");
  if (max_distractor_attempts < 1 || max_pair_attempts < 1) fail("attempt limits must be >= 1");
  if (!(pair_timeout_s > 0)) fail("pair_timeout_s must be positive");
  if (pairs_per_scene < 0) fail("pairs_per_scene must be >= 0");
  if (budget < 1) fail("budget must be >= 1");
  if (!planner.steps.is_valid()) fail("step sizes must be positive");
  if (planner.k_max_rotation < 1 || planner.k_max_translation < 1) fail("k_max must be >= 1");
  if (!intrinsics.is_valid()) fail("invalid intrinsics");
}

json to_json(const PipelineConfig& c) {
  return {
      {"delta",
       {{"w_short", c.delta.w_short},
        {"w_mid", c.delta.w_mid},
        {"w_other", c.delta.w_other},
        {"short_range", {c.delta.short_lo, c.delta.short_hi}},
        {"mid_range", {c.delta.mid_lo, c.delta.mid_hi}}}},
      {"length_bounds", {c.min_length, c.max_length}},
      {"num_distractors", c.num_distractors},
      {"perturb_ratio", c.perturb_ratio},
      {"op_probs", {c.p_replace, c.p_remove, c.p_insert}},
      {"same_category_prob", c.same_category_prob},
      {"pixel_threshold", c.pixel_threshold},
      {"max_distractor_attempts", c.max_distractor_attempts},
      {"max_pair_attempts", c.max_pair_attempts},
      {"pair_timeout_s", c.pair_timeout_s},
      {"seed", c.seed},
      {"pairs_per_scene", c.pairs_per_scene},
      {"identical_position_m", c.identical_position_m},
      {"identical_rotation_deg", c.identical_rotation_deg},
      {"short_long_boundary", c.short_long_boundary},
      {"require_canonical_plan", c.require_canonical_plan},
      {"require_view_quality", c.require_view_quality},
      {"budget", c.budget},
      {"thresholds", {{"beta_t", c.thresholds.beta_t}, {"beta_r", c.thresholds.beta_r}}},
      {"steps", {{"translation", c.planner.steps.translation}, {"rotation_deg", c.planner.steps.rotation_deg}}},
      {"k_max", {c.planner.k_max_rotation, c.planner.k_max_translation}},
      {"intrinsics",
       {{"width", c.intrinsics.width}, {"height", c.intrinsics.height}, {"vfov_deg", c.intrinsics.vfov_deg}}},
  };
}

PipelineConfig pipeline_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("pipeline config must be a JSON object");
  PipelineConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "delta") {
      for (const auto& [k2, v2] : v.items()) {
        if (k2 == "w_short") c.delta.w_short = v2.get<double>();
        else if (k2 == "w_mid") c.delta.w_mid = v2.get<double>();
        else if (k2 == "w_other") c.delta.w_other = v2.get<double>();
        else if (k2 == "short_range") { c.delta.short_lo = v2.at(0).get<int>(); c.delta.short_hi = v2.at(1).get<int>(); }
        else if (k2 == "mid_range") { c.delta.mid_lo = v2.at(0).get<int>(); c.delta.mid_hi = v2.at(1).get<int>(); }
        else throw std::invalid_argument("unknown config key delta." + k2);
      }
    } else if (key == "length_bounds") {
      c.min_length = v.at(0).get<int>();
      c.max_length = v.at(1).get<int>();
    } else if (key == "num_distractors") c.num_distractors = v.get<int>();
    else if (key == "perturb_ratio") c.perturb_ratio = v.get<double>();
    else if (key == "op_probs") {
      c.p_replace = v.at(0).get<double>();
      c.p_remove = v.at(1).get<double>();
      c.p_insert = v.at(2).get<double>();
    } else if (key == "same_category_prob") c.same_category_prob = v.get<double>();
    else if (key == "pixel_threshold") c.pixel_threshold = v.get<double>();
    else if (key == "max_distractor_attempts") c.max_distractor_attempts = v.get<int>();
    else if (key == "max_pair_attempts") c.max_pair_attempts = v.get<int>();
    else if (key == "pair_timeout_s") c.pair_timeout_s = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "pairs_per_scene") c.pairs_per_scene = v.get<int>();
    else if (key == "identical_position_m") c.identical_position_m = v.get<double>();
    else if (key == "identical_rotation_deg") c.identical_rotation_deg = v.get<double>();
    else if (key == "short_long_boundary") c.short_long_boundary = v.get<double>();
    else if (key == "require_canonical_plan") c.require_canonical_plan = v.get<bool>();
    else if (key == "require_view_quality") c.require_view_quality = v.get<bool>();
    else if (key == "budget") c.budget = v.get<int>();
    else if (key == "thresholds") {
      c.thresholds.beta_t = v.value("beta_t", c.thresholds.beta_t);
      c.thresholds.beta_r = v.value("beta_r", c.thresholds.beta_r);
    } else if (key == "steps") {
      c.planner.steps.translation = v.value("translation", c.planner.steps.translation);
      c.planner.steps.rotation_deg = v.value("rotation_deg", c.planner.steps.rotation_deg);
    } else if (key == "k_max") {
      c.planner.k_max_rotation = v.at(0).get<int>();
      c.planner.k_max_translation = v.at(1).get<int>();
    } else if (key == "intrinsics") {
      c.intrinsics.width = v.value("width", c.intrinsics.width);
      c.intrinsics.height = v.value("height", c.intrinsics.height);
      c.intrinsics.vfov_deg = v.value("vfov_deg", c.intrinsics.vfov_deg);
    } else {
      throw std::invalid_argument("unknown config key " + key);
    }
  }
  c.validate();
  return c;
}

std::string_view to_string(PairSource s) { return s == PairSource::Trajectory ? "trajectory" : "synthetic"; }
std::string_view to_string(Difficulty d) { return d == Difficulty::Short ? "Short" : "Long"; }

std::string_view to_string(PerturbOp op) {
  switch (op) {
    case PerturbOp::Replace: return "replace";
    case PerturbOp::Remove: return "remove";
    case PerturbOp::Insert: return "insert";
  }
  return "?";
}

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::P2V: return "P2V";
    case TaskKind::V2P: return "V2P";
    case TaskKind::IVP: return "IVP";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Pair sampling

Trajectory procedural_trajectory(const Scene& scene, std::uint64_t seed, std::size_t frames) {
  Rng rng(seed);
  const Aabb& b = scene.bounds();
  const Eigen::Vector3d c = b.center();
  const double rx = 0.3 * b.extent().x(), ry = 0.3 * b.extent().y();
  const double eye = std::clamp(b.min.z() + 1.5, b.min.z() + 0.2, std::max(b.min.z() + 0.2, b.max.z() - 0.2));
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double dir = uniform01(rng) < 0.5 ? 1.0 : -1.0;
  const double wobble = uniform(rng, 0.05, 0.15);
  const double look_down = uniform(rng, 5.0, 20.0) * std::numbers::pi / 180.0;

  auto position = [&](double t) {
    const double a = phase + dir * 2.0 * std::numbers::pi * 1.25 * t;
    const double r = 1.0 + wobble * std::sin(5.0 * a);
    return Eigen::Vector3d(c.x() + rx * r * std::cos(a), c.y() + ry * r * std::sin(a),
                           eye + 0.1 * std::sin(3.0 * a));
  };

  Trajectory out;
  out.frames.reserve(frames);
  const double dt = 1.0 / static_cast<double>(std::max<std::size_t>(frames, 2) - 1);
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) * dt;
    const Eigen::Vector3d p = position(t);
    Eigen::Vector3d heading = position(t + dt) - position(t - dt);
    heading.z() = 0.0;
    heading.normalize();
    const Eigen::Vector3d fwd = std::cos(look_down) * heading - std::sin(look_down) * Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = fwd.cross(right);
    Eigen::Matrix3d r;
    r << right, down, fwd;
    out.frames.emplace_back(p, r);
  }
  return out;
}

std::optional<int> sample_delta(const DeltaMixture& mix, Rng& rng, std::size_t frame_count) {
  if (frame_count < 2) return std::nullopt;
  const int max_delta = static_cast<int>(frame_count) - 1;
  auto uniform_range = [&](int lo, int hi) -> std::optional<int> {
    hi = std::min(hi, max_delta);
    if (lo > hi) return std::nullopt;
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
  };
  const double u = uniform01(rng);
  if (u < mix.w_short) return uniform_range(mix.short_lo, mix.short_hi);
  if (u < mix.w_short + mix.w_mid) return uniform_range(mix.mid_lo, mix.mid_hi);
  // Complement: every offset in [1, max_delta] outside both named ranges.
  auto in_named = [&](int d) {
    return (d >= mix.short_lo && d <= mix.short_hi) || (d >= mix.mid_lo && d <= mix.mid_hi);
  };
  int count = 0;
  for (int d = 1; d <= max_delta; ++d) count += !in_named(d);
  if (count == 0) return std::nullopt;
  auto k = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(count)));
  for (int d = 1; d <= max_delta; ++d) {
    if (in_named(d)) continue;
    if (k-- == 0) return d;
  }
  return std::nullopt;
}

PairSample make_pair(const Scene& scene, const Pose& init, const Pose& raw_target, const PipelineConfig& cfg) {
  PairSample out;
  const StepSizes& steps = cfg.planner.steps;
  const ViewDistance raw = view_distance(init, raw_target, steps);
  if (raw.position < cfg.identical_position_m && raw.rotation_deg < cfg.identical_rotation_deg) {
    out.skip_reason = "identical poses";
    return out;
  }
  const PlanResult plan = plan_actions(init, raw_target, cfg.planner);
  const auto len = static_cast<int>(plan.actions.size());
  if (len < cfg.min_length || len > cfg.max_length) {
    out.skip_reason = "length bounds";
    return out;
  }
  const Pose committed = execute(init, plan.actions, steps, cfg.planner.snap);
  if (cfg.require_canonical_plan && plan_actions(init, committed, cfg.planner).actions != plan.actions) {
    out.skip_reason = "non-canonical plan";
    return out;
  }
  const double d = view_distance(init, committed, steps).unified;
  if (d < 1.0) {
    out.skip_reason = "below one step";
    return out;
  }
  out.init_view = render_view(scene, init, cfg.intrinsics);
  out.target_view = render_view(scene, committed, cfg.intrinsics);
  if (cfg.require_view_quality &&
      (!quality_check(out.init_view).pass || !quality_check(out.target_view).pass)) {
    out.skip_reason = "view quality";
    return out;
  }
  ViewPair pair;
  pair.scene_id = scene.id();
  pair.init = init;
  pair.target = committed;
  pair.actions = plan.actions;
  pair.distance = d;
  pair.difficulty = d < cfg.short_long_boundary ? Difficulty::Short : Difficulty::Long;
  out.pair = std::move(pair);
  return out;
}

PairSample sample_trajectory_pair(const Scene& scene, const Trajectory& traj, const PipelineConfig& cfg,
                                  Rng& rng) {
  const auto delta = sample_delta(cfg.delta, rng, traj.frames.size());
  if (!delta) {
    PairSample out;
    out.skip_reason = "trajectory too short";
    return out;
  }
  const auto span = static_cast<std::uint64_t>(traj.frames.size()) - static_cast<std::uint64_t>(*delta);
  const int f_init = static_cast<int>(uniform_index(rng, span));
  const int f_tgt = f_init + *delta;
  PairSample out = make_pair(scene, traj.frames[static_cast<std::size_t>(f_init)],
                             traj.frames[static_cast<std::size_t>(f_tgt)], cfg);
  if (out.pair) {
    out.pair->source = PairSource::Trajectory;
    out.pair->f_init = f_init;
    out.pair->f_tgt = f_tgt;
  }
  return out;
}

namespace {

Pose sample_grid_init(const Scene& scene, const StepSizes& steps, Rng& rng) {
  const Aabb& b = scene.bounds();
  const double margin = std::min(0.5, 0.25 * std::min(b.extent().x(), b.extent().y()));
  auto cell = [&](double lo, double hi) {
    // Grid points c + k * s_t inside [lo, hi], anchored at the box center.
    const double c = 0.5 * (lo + hi);
    const auto kmax = static_cast<long>(std::floor((hi - c) / steps.translation));
    const auto k = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(2 * kmax + 1))) - kmax;
    return c + static_cast<double>(k) * steps.translation;
  };
  const double x = cell(b.min.x() + margin, b.max.x() - margin);
  const double y = cell(b.min.y() + margin, b.max.y() - margin);
  const double z_lo = b.min.z() + std::min(1.0, 0.4 * b.extent().z());
  const double z_hi = std::max(z_lo, std::min(b.max.z() - 0.3, b.min.z() + 2.0));
  const double z = cell(z_lo, z_hi);
  // Level camera with any heading (rx = -90 looks along +Y; ry turns about world Z),
  // then optionally tilted one step through the action model so the pose stays on the grid.
  const double s = steps.rotation_deg;
  const auto per_turn = static_cast<std::uint64_t>(std::llround(360.0 / s));
  const double heading = normalize_degrees(s * static_cast<double>(uniform_index(rng, per_turn)));
  const Pose level = snap_orientation(euler_compose({-90.0, heading, 0.0}, Eigen::Vector3d(x, y, z)), steps);
  switch (uniform_index(rng, 3)) {
    case 0: return apply_action(level, Action::LookDown, steps);
    case 1: return apply_action(level, Action::LookUp, steps);
    default: return level;
  }
}

}  // namespace

PairSample sample_synthetic_pair(const Scene& scene, const PipelineConfig& cfg, Rng& rng) {
  const Pose init = sample_grid_init(scene, cfg.planner.steps, rng);
  const auto span = static_cast<std::uint64_t>(cfg.max_length - cfg.min_length + 1);
  const auto len = static_cast<std::size_t>(cfg.min_length) + uniform_index(rng, span);
  ActionSequence seq;
  for (std::size_t i = 0; i < len; ++i) seq.push_back(kAllActions[uniform_index(rng, kActionCount)]);
  const Pose raw = execute(init, seq, cfg.planner.steps, cfg.planner.snap);
  PairSample out = make_pair(scene, init, raw, cfg);
  if (out.pair) out.pair->source = PairSource::Synthetic;
  return out;
}

// ---------------------------------------------------------------------------
// Distractors

Perturbation perturb_sequence(std::span<const Action> seq, const PipelineConfig& cfg, Rng& rng) {
  Perturbation out;
  const std::size_t len = seq.size();
  if (len == 0) return out;
  // The small slack keeps products such as 0.3 * 10 from rounding up past an integer.
  auto m = static_cast<std::size_t>(std::ceil(cfg.perturb_ratio * static_cast<double>(len) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, len);

  std::vector<std::size_t> idx(len);
  for (std::size_t i = 0; i < len; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + uniform_index(rng, len - i);
    std::swap(idx[i], idx[j]);
  }
  out.positions.assign(idx.begin(), idx.begin() + static_cast<long>(m));
  std::sort(out.positions.begin(), out.positions.end());

  std::vector<std::optional<PerturbOp>> op_at(len);
  std::vector<Action> replacement(len, Action::MoveForward);
  for (std::size_t pos : out.positions) {
    const double u = uniform01(rng);
    const PerturbOp op = u < cfg.p_replace ? PerturbOp::Replace
                         : u < cfg.p_replace + cfg.p_remove ? PerturbOp::Remove
                                                            : PerturbOp::Insert;
    op_at[pos] = op;
    out.ops.push_back(op);
    if (op == PerturbOp::Replace) {
      const Action orig = seq[pos];
      const bool same = uniform01(rng) < cfg.same_category_prob;
      std::vector<Action> pool;
      for (Action a : kAllActions) {
        if (same ? (category(a) == category(orig) && a != orig) : category(a) != category(orig)) pool.push_back(a);
      }
      replacement[pos] = pool[uniform_index(rng, pool.size())];
    } else if (op == PerturbOp::Insert) {
      replacement[pos] = kAllActions[uniform_index(rng, kActionCount)];
    }
  }
  for (std::size_t i = 0; i < len; ++i) {
    if (!op_at[i]) {
      out.sequence.push_back(seq[i]);
      continue;
    }
    switch (*op_at[i]) {
      case PerturbOp::Replace: out.sequence.push_back(replacement[i]); break;
      case PerturbOp::Remove: break;
      case PerturbOp::Insert:
        out.sequence.push_back(replacement[i]);
        out.sequence.push_back(seq[i]);
        break;
    }
  }
  return out;
}

DistractorResult gen_distractors(const ViewPair& pair, const RenderedView& target_view, const Scene& scene,
                                 const PipelineConfig& cfg, Rng& rng) {
  DistractorResult out;
  out.options.push_back({pair.actions, pair.target, target_view});
  for (int k = 0; k < cfg.num_distractors; ++k) {
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_distractor_attempts && !accepted; ++attempt) {
      ++out.attempts;
      Perturbation p = perturb_sequence(pair.actions, cfg, rng);
      if (p.sequence.empty()) continue;
      const bool duplicate = std::any_of(out.options.begin(), out.options.end(),
                                         [&](const Option& o) { return o.actions == p.sequence; });
      if (duplicate) continue;
      const Pose pose = execute(pair.init, p.sequence, cfg.planner.steps, cfg.planner.snap);
      RenderedView view = render_view(scene, pose, cfg.intrinsics);
      if (view.void_fraction() >= 1.0) continue;
      const bool distinct = std::all_of(out.options.begin(), out.options.end(), [&](const Option& o) {
        return pixel_diff(view, o.view) > cfg.pixel_threshold;
      });
      if (!distinct) continue;
      out.options.push_back({std::move(p.sequence), pose, std::move(view)});
      accepted = true;
    }
    if (!accepted) {
      out.failure = "distractor attempts exhausted";
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Instances and splits

json to_json(const TaskInstance& t) {
  auto ref = [](const ImageRef& r) { return json{{"path", r.path}, {"rgb_sha256", r.sha256}}; };
  json j = {
      {"instance_id", t.instance_id},
      {"kind", to_string(t.kind)},
      {"pair_id", t.pair.pair_id},
      {"scene_id", t.pair.scene_id},
      {"source", to_string(t.pair.source)},
      {"init_pose", pose_to_json(t.pair.init)},
      {"target_pose", pose_to_json(t.pair.target)},
      {"gt_actions", actions_to_json(t.pair.actions)},
      {"distance", t.pair.distance},
      {"difficulty", to_string(t.pair.difficulty)},
      {"images", {{"init", ref(t.images.init)}, {"topdown", ref(t.images.topdown)}, {"target", ref(t.images.target)}}},
      {"partition", t.partition},
      {"subset", t.subset},
      {"seed", t.seed},
  };
  if (t.pair.source == PairSource::Trajectory) {
    j["f_init"] = t.pair.f_init;
    j["f_tgt"] = t.pair.f_tgt;
  }
  if (t.kind == TaskKind::P2V) {
    json opts = json::array();
    for (const auto& r : t.option_images) opts.push_back(ref(r));
    j["options"] = opts;
    j["correct_index"] = t.correct_index;
  } else if (t.kind == TaskKind::V2P) {
    json opts = json::array();
    for (const auto& a : t.option_actions) opts.push_back(actions_to_json(a));
    j["options"] = opts;
    j["correct_index"] = t.correct_index;
  } else {
    j["budget"] = t.budget;
    j["thresholds"] = {{"position_m", t.thresholds.beta_t * t.steps.translation},
                       {"rotation_deg", t.thresholds.beta_r * t.steps.rotation_deg}};
    j["steps"] = {{"translation", t.steps.translation}, {"rotation_deg", t.steps.rotation_deg}};
    j["init_prompt"] = format_pose_prompt(t.pair.init);
  }
  return j;
}

std::array<TaskInstance, 3> build_instances(const ViewPair& pair, const std::vector<ActionSequence>& option_actions,
                                            const PairImages& images, const PipelineConfig& cfg, Rng& rng) {
  std::array<TaskInstance, 3> out;
  const TaskKind kinds[3] = {TaskKind::P2V, TaskKind::V2P, TaskKind::IVP};
  for (int i = 0; i < 3; ++i) {
    TaskInstance& t = out[static_cast<std::size_t>(i)];
    t.kind = kinds[i];
    t.pair = pair;
    t.images = images;
    t.budget = cfg.budget;
    t.thresholds = cfg.thresholds;
    t.steps = cfg.planner.steps;
    t.seed = cfg.seed;
    std::string suffix(to_string(t.kind));
    std::transform(suffix.begin(), suffix.end(), suffix.begin(), [](unsigned char c) { return std::tolower(c); });
    t.instance_id = pair.pair_id + "_" + suffix;
    if (t.kind == TaskKind::IVP) continue;
    std::vector<std::size_t> order(option_actions.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (order[k] == 0) t.correct_index = static_cast<int>(k);
      if (t.kind == TaskKind::V2P) t.option_actions.push_back(option_actions[order[k]]);
      if (t.kind == TaskKind::P2V && order[k] < images.options.size()) t.option_images.push_back(images.options[order[k]]);
    }
  }
  return out;
}

DatasetSplit split_dataset(const std::map<std::string, std::vector<std::string>>& pairs_by_scene, std::uint64_t seed) {
  if (pairs_by_scene.size() < 10) throw std::invalid_argument("split_dataset: need at least 10 scenes");
  DatasetSplit out;
  std::vector<std::string> scenes;
  for (const auto& [scene, _] : pairs_by_scene) scenes.push_back(scene);
  Rng rng(derive_seed(seed, "split"));
  shuffle(scenes.begin(), scenes.end(), rng);
  const auto n = static_cast<double>(scenes.size());
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * n));
  const auto n_dev = static_cast<std::size_t>(std::llround(0.1 * n));
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    out.scene_partition[scenes[i]] = i < n_train ? "train" : i < n_train + n_dev ? "dev" : "test";
  }
  for (const auto& [scene, pairs] : pairs_by_scene) {
    std::vector<std::string> ids = pairs;
    std::sort(ids.begin(), ids.end());
    Rng prng(derive_seed(seed, "subset/" + scene));
    shuffle(ids.begin(), ids.end(), prng);
    const auto n5 = static_cast<std::size_t>(std::llround(static_cast<double>(ids.size()) / 11.0));
    for (std::size_t i = 0; i < ids.size(); ++i) out.pair_subset[ids[i]] = i < n5 ? "5K" : "50K";
  }
  return out;
}

std::vector<std::string> filter_scenes(const std::vector<std::string>& scene_ids,
                                       const std::filesystem::path& verdict_file) {
  if (verdict_file.empty() || !std::filesystem::exists(verdict_file)) {
    spdlog::info("no scene verdict file{}; keeping all {} scenes",
                 verdict_file.empty() ? "" : " at " + verdict_file.string(), scene_ids.size());
    return scene_ids;
  }
  std::map<std::string, std::string> verdicts;
  for (const json& j : read_jsonl(verdict_file)) {
    verdicts[j.at("scene_id").get<std::string>()] = j.at("verdict").get<std::string>();
  }
  std::vector<std::string> out;
  for (const auto& id : scene_ids) {
    const auto it = verdicts.find(id);
    if (it == verdicts.end()) {
      spdlog::warn("scene {} has no verdict; excluded", id);
    } else if (it->second == "good") {
      out.push_back(id);
    } else if (it->second != "bad") {
      spdlog::warn("scene {} has unrecognized verdict '{}'; excluded", id, it->second);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct PairRecord {
  ViewPair pair;
  std::vector<ActionSequence> option_actions;
  PairImages images;
};

struct SceneOutput {
  std::vector<PairRecord> records;
  std::map<std::string, std::size_t> skips;
};

ImageRef store_image(const RenderedView& view, const std::string& rel, const std::filesystem::path& out_dir) {
  ImageRef ref{rel, sha256_hex(view.rgb)};
  if (!out_dir.empty()) {
    const auto path = out_dir / rel;
    std::filesystem::create_directories(path.parent_path());
    write_png(path, to_image(view));
  }
  return ref;
}

SceneOutput process_scene(const SceneInput& input, const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  SceneOutput out;
  const Scene& scene = input.scene;
  Rng rng(derive_seed(cfg.seed, scene.id()));
  const std::string dir = "images/" + scene.id() + "/";
  const RenderedView top = render_view(scene, topdown_pose(scene, cfg.intrinsics), cfg.intrinsics);
  const ImageRef top_ref = store_image(top, dir + "topdown.png", out_dir);

  for (int slot = 0; slot < cfg.pairs_per_scene; ++slot) {
    const auto start = std::chrono::steady_clock::now();
    PairSample sample;
    std::string last_reason = "attempts exhausted";
    for (int attempt = 0; attempt < cfg.max_pair_attempts; ++attempt) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      if (elapsed.count() > cfg.pair_timeout_s) {
        last_reason = "timeout";
        break;
      }
      sample = input.trajectory ? sample_trajectory_pair(scene, *input.trajectory, cfg, rng)
                                : sample_synthetic_pair(scene, cfg, rng);
      if (sample.pair) break;
      ++out.skips[sample.skip_reason];
    }
    if (!sample.pair) {
      ++out.skips["slot dropped: " + last_reason];
      continue;
    }
    ViewPair& pair = *sample.pair;
    pair.pair_id = fmt::format("{}_{:04d}", scene.id(), slot);
    DistractorResult dr = gen_distractors(pair, sample.target_view, scene, cfg, rng);
    if (!dr.ok()) {
      spdlog::info("pair {} dropped: {}", pair.pair_id, dr.failure);
      ++out.skips[dr.failure];
      continue;
    }
    PairRecord rec;
    rec.images.topdown = top_ref;
    rec.images.init = store_image(sample.init_view, dir + pair.pair_id + "_init.png", out_dir);
    rec.images.target = store_image(sample.target_view, dir + pair.pair_id + "_target.png", out_dir);
    for (std::size_t k = 0; k < dr.options.size(); ++k) {
      rec.option_actions.push_back(dr.options[k].actions);
      rec.images.options.push_back(
          k == 0 ? rec.images.target
                 : store_image(dr.options[k].view, fmt::format("{}{}_opt{}.png", dir, pair.pair_id, k), out_dir));
    }
    rec.pair = std::move(pair);
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const std::vector<SceneInput>& scenes, const PipelineConfig& cfg,
                            const std::filesystem::path& out_dir, unsigned threads) {
  cfg.validate();
  std::set<std::string> ids;
  for (const auto& s : scenes) {
    if (!ids.insert(s.scene.id()).second) throw std::invalid_argument("duplicate scene id " + s.scene.id());
  }

  // Scenes are independent; results are gathered in input order.
  std::vector<SceneOutput> outputs(scenes.size());
  threads = std::max(1U, threads);
  for (std::size_t begin = 0; begin < scenes.size(); begin += threads) {
    const std::size_t end = std::min(scenes.size(), begin + threads);
    std::vector<std::future<SceneOutput>> jobs;
    for (std::size_t i = begin; i < end; ++i) {
      jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred,
                                [&, i] { return process_scene(scenes[i], cfg, out_dir); }));
    }
    for (std::size_t i = begin; i < end; ++i) outputs[i] = jobs[i - begin].get();
  }

  PipelineResult result;
  std::map<std::string, std::vector<std::string>> pairs_by_scene;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    auto& ids_for_scene = pairs_by_scene[scenes[i].scene.id()];
    for (const auto& r : outputs[i].records) ids_for_scene.push_back(r.pair.pair_id);
    for (const auto& [reason, n] : outputs[i].skips) result.stats.skips[reason] += n;
  }
  DatasetSplit split;
  const bool can_split = pairs_by_scene.size() >= 10;
  if (can_split) {
    split = split_dataset(pairs_by_scene, cfg.seed);
  } else {
    spdlog::warn("{} scenes is too few for an 8:1:1 split; instances are marked unsplit", pairs_by_scene.size());
  }

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const auto& rec : outputs[i].records) {
      Rng rng(derive_seed(cfg.seed, rec.pair.pair_id + "/instances"));
      auto instances = build_instances(rec.pair, rec.option_actions, rec.images, cfg, rng);
      const std::string partition = can_split ? split.scene_partition.at(rec.pair.scene_id) : "unsplit";
      const std::string subset = can_split ? split.pair_subset.at(rec.pair.pair_id) : "50K";
      for (auto& t : instances) {
        t.partition = partition;
        t.subset = subset;
        result.manifest.push_back(to_json(t));
      }
      ++result.stats.pairs;
      result.stats.instances += instances.size();
      result.stats.distances.push_back(rec.pair.distance);
    }
  }
  if (!out_dir.empty()) {
    write_jsonl(out_dir / "manifest.jsonl", result.manifest);
    json summary = {{"config", to_json(cfg)}, {"pairs", result.stats.pairs}, {"instances", result.stats.instances},
                    {"skips", result.stats.skips}};
    write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  }
  return result;
}

}  // namespace viewplan
