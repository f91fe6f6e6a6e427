#include <random>
#include <set>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "viewplan/calibration.hpp"
#include "viewplan/datagen.hpp"
#include "viewplan/episode.hpp"

namespace viewplan {
namespace {

EpisodeInstance simple_instance() {
  EpisodeInstance inst;
  inst.instance_id = "t";
  inst.scene_id = "s";
  inst.init = euler_compose({-90, 0, 0}, {0, 0, 1.5});
  inst.gt_actions = {Action::MoveForward, Action::MoveForward, Action::TurnRight};
  inst.target = execute(inst.init, inst.gt_actions);
  return inst;
}

// IVP instances straight from the pipeline, shared by the agent tests.
const std::vector<EpisodeInstance>& pipeline_instances() {
  static const std::vector<EpisodeInstance> insts = [] {
    PipelineConfig cfg;
    cfg.intrinsics = {96, 72, 60.0};
    cfg.pairs_per_scene = 30;
    cfg.seed = 21;
    ProceduralSpec spec;
    spec.vertex_count = 20000;
    std::vector<SceneInput> scenes;
    for (std::uint64_t s = 0; s < 4; ++s) scenes.push_back({procedural_scene(100 + s, spec), std::nullopt});
    std::vector<EpisodeInstance> out;
    for (const json& j : run_pipeline(scenes, cfg).manifest) {
      if (j.at("kind") == "IVP") out.push_back(episode_instance_from_json(j));
    }
    return out;
  }();
  return insts;
}

TEST(ParseResponse, Accepts) {
  auto r = parse_response("<think>go</think><action>turn_left|move_forward</action>");
  ASSERT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(r.response->actions, (ActionSequence{Action::TurnLeft, Action::MoveForward}));
  EXPECT_EQ(*r.response->think, "go");

  r = parse_response("<action>answer(4.07, 3.28, 1.66, -90, 0, -120)</action>");
  ASSERT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(*r.response->answer, (PoseVector{4.07, 3.28, 1.66, -90, 0, -120}));
  EXPECT_TRUE(r.response->actions.empty());

  r = parse_response("  \n<think>\nmulti\nline </think>\n <action> look_up | rotate_cw </action>\n");
  ASSERT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(r.response->actions.size(), 2U);
  EXPECT_TRUE(parse_response("<action>answer( 1e0 ,+2,-3.5, 0,0,0 )</action>").ok());
}

TEST(ParseResponse, Rejects) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"<action>fly_up</action>", "unknown action 'fly_up'"},
      {"<action>answer(1, 2, 3)</action>", "answer needs 6 numbers, got 3"},
      {"<action>answer(1,2,3,4,5,6,7)</action>", "answer needs 6 numbers, got 7"},
      {"<action>answer(1,2,3,4,5,x)</action>", "bad number 'x' in answer"},
      {"<action>answer(1,2,3,4,5,nan)</action>", "non-finite number in answer"},
      {"turn_left", "missing action block"},
      {"<think>x</think>", "missing action block"},
      {"<action>turn_left</action><action>turn_left</action>", "multiple action blocks"},
      {"<action></action>", "empty action block"},
      {"<action>turn_left||move_up</action>", "empty action name"},
      {"sure! <action>turn_left</action>", "unexpected text before action block"},
      {"<action>turn_left</action> done", "unexpected text after action block"},
      {"<think>x<action>turn_left</action>", "unterminated think block"},
      {"<action>turn_left", "unterminated action block"},
      {"<action>Turn_Left</action>", "unknown action 'Turn_Left'"},
  };
  for (const auto& [text, why] : cases) {
    const auto r = parse_response(text);
    EXPECT_FALSE(r.ok()) << text;
    EXPECT_EQ(r.error, why) << text;
  }
  std::string eleven = "<action>turn_left";
  for (int i = 0; i < 10; ++i) eleven += "|turn_left";
  EXPECT_EQ(parse_response(eleven + "</action>").error, "too many actions (11 > 10)");
  std::string ten = "<action>turn_left";
  for (int i = 0; i < 9; ++i) ten += "|turn_left";
  EXPECT_TRUE(parse_response(ten + "</action>").ok());
}

TEST(Episode, CorrectAnswerEarnsFullReward) {
  const EpisodeInstance inst = simple_instance();
  Episode ep(inst, ProtocolVariant::Default);
  ep.step(format_actions(inst.gt_actions));
  EXPECT_FALSE(ep.terminal());
  EXPECT_EQ(ep.pose(), inst.target);
  ep.step(format_answer(ep.pose()));
  ASSERT_TRUE(ep.terminal());
  EXPECT_TRUE(ep.outcome()->success);
  EXPECT_DOUBLE_EQ(ep.outcome()->reward, 1.1);
  EXPECT_EQ(ep.outcome()->turns, 2);
  EXPECT_EQ(ep.outcome()->termination, "answer");
  EXPECT_THROW(ep.step("<action>turn_left</action>"), std::logic_error);
}

TEST(Episode, WrongAnswerAndMalformedTurns) {
  const EpisodeInstance inst = simple_instance();
  Episode ep(inst, ProtocolVariant::Default);
  ep.step("I would like to go forward");
  EXPECT_FALSE(ep.terminal());
  EXPECT_EQ(ep.turn(), 1);
  EXPECT_EQ(ep.pose(), inst.init);
  EXPECT_FALSE(ep.history()[0].format_ok);
  ep.step(format_answer(inst.init));
  EXPECT_FALSE(ep.outcome()->success);
  EXPECT_DOUBLE_EQ(ep.outcome()->reward, 0.1);
  EXPECT_NEAR(ep.outcome()->d_pos, 1.0, 1e-9);
  EXPECT_NEAR(ep.outcome()->d_rot, 30.0, 1e-9);
}

TEST(Episode, AnswerIsScoredUnsnapped) {
  const EpisodeInstance inst = simple_instance();
  Episode ep(inst, ProtocolVariant::Default);
  PoseVector v = to_vector(inst.target);
  v[5] += 29.0;  // within 30 deg, and would not snap back
  ep.step(format_answer(from_vector(v)));
  EXPECT_TRUE(ep.outcome()->success);
  EXPECT_NEAR(ep.outcome()->d_rot, 29.0, 1e-6);
}

TEST(Episode, BudgetExhaustion) {
  EpisodeInstance inst = simple_instance();
  inst.budget = 3;
  Episode ok(inst, ProtocolVariant::Default);
  for (int i = 0; i < 3; ++i) ok.step("<action>turn_left</action>");
  ASSERT_TRUE(ok.terminal());
  EXPECT_EQ(ok.outcome()->termination, "budget");
  EXPECT_DOUBLE_EQ(ok.outcome()->reward, 0.1);

  Episode bad(inst, ProtocolVariant::Default);
  bad.step("<action>turn_left</action>");
  bad.step("<action>turn_left</action>");
  bad.step("garbage");
  EXPECT_DOUBLE_EQ(bad.outcome()->reward, 0.0);
  EXPECT_FALSE(bad.outcome()->format_ok);

  inst.budget = 0;
  Episode none(inst, ProtocolVariant::Default);
  ASSERT_TRUE(none.terminal());
  EXPECT_FALSE(none.outcome()->success);
  EXPECT_EQ(none.outcome()->turns, 0);
  EXPECT_DOUBLE_EQ(none.outcome()->reward, 0.0);
}

TEST(Episode, NoSubmitSucceedsMidSequence) {
  const EpisodeInstance inst = simple_instance();
  // Passes through the target and out again within one turn.
  const ActionSequence seq = {Action::MoveForward, Action::MoveForward, Action::TurnRight, Action::MoveForward,
                              Action::MoveForward, Action::MoveForward};
  Episode def(inst, ProtocolVariant::Default);
  def.step(format_actions(seq));
  EXPECT_FALSE(def.terminal());

  Episode ns(inst, ProtocolVariant::NoSubmit);
  ns.step(format_actions(seq));
  ASSERT_TRUE(ns.terminal());
  EXPECT_TRUE(ns.outcome()->success);
  EXPECT_EQ(ns.outcome()->termination, "threshold");
  EXPECT_DOUBLE_EQ(ns.outcome()->reward, 1.1);
  EXPECT_EQ(ns.outcome()->turns, 1);
  // Only the actions up to the crossing were executed.
  EXPECT_EQ(ns.history()[0].actions.size(), 1U);  // 0.5 m + 30 deg away is already inside
}

TEST(Episode, NoSnapExecutesRawRotations) {
  EpisodeInstance inst = simple_instance();
  inst.init = euler_compose({-80, 10, 5}, {0, 0, 1.5});
  Episode ep(inst, ProtocolVariant::NoSnap);
  ep.step("<action>turn_left</action>");
  const Pose expected = apply_action(inst.init, Action::TurnLeft, inst.steps, false);
  EXPECT_LT(pose_error(ep.pose(), expected), 1e-12);
  EXPECT_FALSE(is_grid_aligned(ep.pose()));
}

TEST(Episode, AgentFailureAborts) {
  const EpisodeInstance inst = simple_instance();
  const Agent boom = [](const Observation&) -> std::string { throw std::runtime_error("backend down"); };
  const RolloutLog log = run_episode(inst, boom, ProtocolVariant::Default, "e0");
  EXPECT_EQ(log.outcome.termination, "aborted");
  EXPECT_FALSE(log.outcome.success);
  EXPECT_DOUBLE_EQ(log.outcome.reward, 0.0);
  EXPECT_EQ(log.to_jsonl().size(), 1U);
}

TEST(Agents, OracleSolvesPipelineInstances) {
  const auto& insts = pipeline_instances();
  ASSERT_GE(insts.size(), 100U);
  for (std::size_t i = 0; i < 100; ++i) {
    const RolloutLog log = run_episode(insts[i], oracle_agent(insts[i]), ProtocolVariant::Default, "o");
    ASSERT_TRUE(log.outcome.success) << insts[i].instance_id;
    EXPECT_DOUBLE_EQ(log.outcome.reward, 1.1);
    EXPECT_LT(log.outcome.d_pos, 1e-9);
  }
}

TEST(Agents, RandomRarelySucceeds) {
  const auto& insts = pipeline_instances();
  int successes = 0;
  for (int i = 0; i < 200; ++i) {
    const auto& inst = insts[static_cast<std::size_t>(i) % insts.size()];
    const RolloutLog log = run_episode(inst, random_agent(1000 + i), ProtocolVariant::Default, "r");
    successes += log.outcome.success;
  }
  EXPECT_LE(successes, 10);
}

TEST(Properties, RewardReplayBudgetAndVariantMonotonicity) {
  const auto& insts = pipeline_instances();
  const std::set<double> rewards = {0.0, 0.1, 1.0, 1.1};
  int default_wins = 0, nosubmit_wins = 0;
  for (int i = 0; i < 300; ++i) {
    const auto& inst = insts[static_cast<std::size_t>(i) % insts.size()];
    // Mix of random play and partially-correct play to exercise every branch.
    Agent agent = random_agent(5000 + i);
    if (i % 3 == 0) agent = oracle_agent(inst);
    if (i % 5 == 0) agent = [a = agent, n = 0](const Observation& o) mutable {
      return ++n % 4 == 0 ? std::string("noise") : a(o);
    };
    for (ProtocolVariant v : {ProtocolVariant::Default, ProtocolVariant::NoSnap}) {
      const RolloutLog log = run_episode(inst, agent, v, "p");
      ASSERT_TRUE(rewards.count(std::round(log.outcome.reward * 10) / 10)) << log.outcome.reward;
      ASSERT_LE(static_cast<int>(log.turns.size()), inst.budget);
      const Pose replayed = replay_pose(inst, log.turns, v);
      EXPECT_LT(pose_error(replayed, log.turns.back().pose), v == ProtocolVariant::NoSnap ? 1e-6 : 1e-9);
      if (v != ProtocolVariant::Default) continue;
      std::vector<std::string> responses;
      for (const auto& t : log.turns) responses.push_back(t.response);
      const Episode relaxed = rescore(inst, responses, ProtocolVariant::NoSubmit);
      default_wins += log.outcome.success;
      nosubmit_wins += relaxed.outcome() && relaxed.outcome()->success;
      if (log.outcome.success) EXPECT_TRUE(relaxed.outcome() && relaxed.outcome()->success);
    }
  }
  EXPECT_GE(nosubmit_wins, default_wins);
  EXPECT_GT(default_wins, 0);
}

TEST(RolloutLog, JsonlShape) {
  const auto& inst = pipeline_instances().front();
  const RolloutLog log = run_episode(inst, oracle_agent(inst), ProtocolVariant::Default, "ep-1");
  const auto lines = log.to_jsonl();
  ASSERT_EQ(lines.size(), log.turns.size() + 1);
  for (const char* key : {"episode_id", "scene_id", "variant", "turn", "request_images", "response", "actions",
                          "answer", "pose", "reward", "success", "d_pos", "d_rot"}) {
    EXPECT_TRUE(lines[0].contains(key)) << key;
  }
  EXPECT_EQ(lines.back().at("type"), "outcome");
  EXPECT_EQ(lines.back().at("reward"), 1.1);
}

TEST(RolloutLog, RendersRequestImages) {
  const Scene scene = procedural_scene(100, {6, 5, 2.6, 4, 20000});
  EpisodeInstance inst = simple_instance();
  inst.init.position = scene.bounds().center();
  inst.target = execute(inst.init, inst.gt_actions);
  const RolloutLog log = run_episode(inst, oracle_agent(inst), ProtocolVariant::Default, "v",
                                     {&scene, {64, 48, 60.0}});
  ASSERT_EQ(log.request_images.size(), 2U);
  EXPECT_EQ(log.request_images[0].size(), 3U);  // current, target, top-down
  EXPECT_EQ(log.request_images[1].size(), 2U);
  EXPECT_EQ(log.request_images[1][0], log.request_images[1][1]);  // standing on the target
}

// ---------------------------------------------------------------------------

std::vector<CalibrationRecord> rule_labelled(std::size_t n, double pos, double rot, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dp(0.0, 1.3), dr(0.0, 110.0), u(-1, 1);
  std::vector<CalibrationRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Pose target = testing::random_pose(rng);
    Eigen::Vector3d dir(u(rng), u(rng), u(rng));
    Eigen::Vector3d axis(u(rng), u(rng), u(rng));
    const double d_pos = dp(rng), d_rot = dr(rng);
    const Pose est{target.position + d_pos * dir.normalized(),
                   target.rotation * Eigen::AngleAxisd(d_rot * std::numbers::pi / 180.0, axis.normalized()).matrix()};
    out.push_back({est, target, within_thresholds(view_distance(est, target), pos, rot)});
  }
  return out;
}

TEST(Calibration, RuleLabelsRecoverTheRule) {
  const CalibrationReport rep = calibrate_thresholds(rule_labelled(400, 0.5, 30.0, 1));
  ASSERT_EQ(rep.rows.size(), 12U);
  const CalibrationRow& best = rep.rows[rep.best];
  EXPECT_EQ(best.position_m, 0.5);
  EXPECT_EQ(best.rotation_deg, 30.0);
  EXPECT_DOUBLE_EQ(best.f1, 1.0);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    if (i != rep.best) EXPECT_LT(rep.rows[i].f1, 1.0);
  }
  // Recovered for other generating rules too.
  const CalibrationReport other = calibrate_thresholds(rule_labelled(400, 0.75, 60.0, 2));
  EXPECT_EQ(other.rows[other.best].position_m, 0.75);
  EXPECT_EQ(other.rows[other.best].rotation_deg, 60.0);
}

TEST(Calibration, TiesGoToSmallerThresholds) {
  // One record far inside every cell: every cell is perfect.
  const Pose p;
  const CalibrationReport rep = calibrate_thresholds({{p, p, true}, {p, {Eigen::Vector3d(5, 0, 0), p.rotation}, false}});
  EXPECT_EQ(rep.best, 0U);
}

TEST(Calibration, AllPositiveLabels) {
  auto recs = rule_labelled(200, 0.5, 30.0, 3);
  int rule_pos = 0;
  for (auto& r : recs) r.match = true;
  const CalibrationReport rep = calibrate_thresholds(recs);
  EXPECT_FALSE(rep.warnings.empty());
  for (const auto& row : rep.rows) {
    EXPECT_DOUBLE_EQ(row.recall, row.tp > 0 ? static_cast<double>(row.tp) / 200.0 : 0.0);
    if (row.tp > 0) EXPECT_DOUBLE_EQ(row.precision, 1.0);
    rule_pos += row.tp;
  }
  EXPECT_GT(rule_pos, 0);
  EXPECT_THROW(calibrate_thresholds({}), std::invalid_argument);
}

TEST(Calibration, AllPositivePredictions) {
  // A rule that accepts everything: recall 1, precision = positive rate.
  auto recs = rule_labelled(200, 0.5, 30.0, 4);
  int positives = 0;
  for (const auto& r : recs) positives += r.match;
  const CalibrationReport rep = calibrate_thresholds(recs, {100.0}, {180.0});
  EXPECT_DOUBLE_EQ(rep.rows[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(rep.rows[0].precision, positives / 200.0);
}

TEST(Calibration, TableFormat) {
  const CalibrationRow row = score_row(0.5, 30.0, 43, 6, 2, 49);
  EXPECT_NEAR(row.precision, 0.878, 5e-4);
  EXPECT_NEAR(row.recall, 0.956, 5e-4);
  EXPECT_NEAR(row.f1, 0.915, 5e-4);
  EXPECT_NEAR(row.accuracy, 0.920, 5e-4);
  CalibrationReport rep;
  rep.rows = {row};
  EXPECT_EQ(calibration_csv(rep), "position_m,rotation_deg,precision,recall,f1,accuracy\n0.50,30,0.878,0.956,0.915,0.920\n");
  EXPECT_NE(calibration_table(rep).find("Position thr. | Rotation thr. | Precision | Recall |    F1 | Accuracy"),
            std::string::npos);
}

}  // namespace
}  // namespace viewplan
