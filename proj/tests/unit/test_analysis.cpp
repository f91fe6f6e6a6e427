#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "viewplan/analysis.hpp"
#include "viewplan/episode.hpp"

namespace viewplan {
namespace {

namespace fs = std::filesystem;

const Pose kFacingY = euler_compose({-90, 0, 0}, {0, 0, 1.5});

TEST(Factors, AnalyticCases) {
  const Pose init = euler_compose({-90, 0, 0}, {0, 0, 0});
  FactorVector f = compute_factors(init, euler_compose({-90, 0, 0}, {0, 2, 0}));
  EXPECT_NEAR(*f.forward_alignment, 1.0, 1e-12);
  EXPECT_NEAR(*f.target_bearing, 0.0, 1e-6);
  EXPECT_NEAR(f.orientation_agreement, 1.0, 1e-12);
  EXPECT_NEAR(f.pos_dist, 2.0, 1e-12);
  EXPECT_NEAR(f.horiz_dist, 2.0, 1e-12);
  EXPECT_NEAR(f.height_diff, 0.0, 1e-12);
  EXPECT_NEAR(f.unified_dist, 4.0, 1e-12);

  f = compute_factors(init, euler_compose({-90, 0, 0}, {1, 0, 1}));
  EXPECT_NEAR(*f.target_elevation, 45.0, 1e-9);
  EXPECT_NEAR(f.height_diff, 1.0, 1e-12);
  EXPECT_NEAR(*f.forward_alignment, 0.0, 1e-12);
  EXPECT_NEAR(*f.target_bearing, 90.0, 1e-9);

  // behind, and the opposite-axis convention flips the sign
  f = compute_factors(init, euler_compose({-90, 180, 0}, {0, -1, 0}));
  EXPECT_NEAR(*f.forward_alignment, -1.0, 1e-12);
  EXPECT_NEAR(f.orientation_agreement, -1.0, 1e-12);
  EXPECT_NEAR(f.rot_dist, 180.0, 1e-9);
  FactorOptions minus;
  minus.forward = ForwardAxis::MinusZ;
  EXPECT_NEAR(*compute_factors(init, euler_compose({-90, 0, 0}, {0, 2, 0}), minus).forward_alignment, -1.0, 1e-12);

  const VertexSet a{1, 2, 3, 4}, b{3, 4, 5};
  f = compute_factors(init, init, {}, &a, &a);
  EXPECT_EQ(*f.vis_iou, 1.0);
  EXPECT_FALSE(f.forward_alignment.has_value());
  EXPECT_FALSE(f.target_bearing.has_value());
  EXPECT_FALSE(f.target_elevation.has_value());
  f = compute_factors(init, init, {}, &a, &b);
  EXPECT_DOUBLE_EQ(*f.vis_init_norm, 0.5);
  EXPECT_DOUBLE_EQ(*f.vis_target_norm, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*f.vis_iou, 0.4);
  const VertexSet none;
  EXPECT_FALSE(compute_factors(init, init, {}, &none, &none).vis_iou.has_value());
  EXPECT_FALSE(compute_factors(init, init).vis_init_norm.has_value());
}

TEST(Factors, RangesOnRandomPairs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-4, 4);
  std::uniform_int_distribution<int> k(-5, 6);
  for (int i = 0; i < 2000; ++i) {
    const Pose a = euler_compose({k(rng) * 30.0, k(rng) * 30.0, k(rng) * 30.0}, {u(rng), u(rng), u(rng)});
    const Pose b = euler_compose({k(rng) * 30.0, k(rng) * 30.0, k(rng) * 30.0}, {u(rng), u(rng), u(rng)});
    const FactorVector f = compute_factors(a, b);
    EXPECT_GE(*f.forward_alignment, -1.0);
    EXPECT_LE(*f.forward_alignment, 1.0);
    EXPECT_GE(*f.target_bearing, 0.0);
    EXPECT_LE(*f.target_bearing, 180.0);
    EXPECT_GE(*f.target_elevation, -90.0);
    EXPECT_LE(*f.target_elevation, 90.0);
    EXPECT_GE(f.rot_dist, 0.0);
    EXPECT_LE(f.rot_dist, 180.0 + 1e-9);
    EXPECT_LE(f.horiz_dist, f.pos_dist + 1e-12);
  }
}

TEST(Spearman, MonotoneAndTies) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(*spearman(x, std::vector<double>{2, 4, 8, 16, 32}), 1.0);
  EXPECT_DOUBLE_EQ(*spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0);

  // hand-ranked: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3) -> 1.5 / sqrt(1.5 * 2)
  const std::vector<double> tx{1, 1, 2}, ty{1, 2, 3};
  EXPECT_EQ(average_ranks(tx), (std::vector<double>{1.5, 1.5, 3}));
  EXPECT_NEAR(*spearman(tx, ty), 0.8660254037844386, 1e-12);
  EXPECT_NEAR(*spearman(tx, ty), 1.5 / std::sqrt(3.0), 1e-15);

  EXPECT_FALSE(spearman(std::vector<double>{2, 2, 2}, ty).has_value());
  EXPECT_THROW(spearman(tx, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> a(200), b(200), ea(200), cb(200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = n(rng);
    b[i] = a[i] + n(rng);
    ea[i] = std::exp(a[i]);
    cb[i] = b[i] * b[i] * b[i];
  }
  EXPECT_NEAR(*spearman(a, b), *spearman(ea, cb), 1e-12);
}

TEST(FactorCorrelations, SkipsUndefined) {
  std::vector<FactorVector> fs(4);
  std::vector<double> success{0, 1, 0, 1};
  for (int i = 0; i < 4; ++i) {
    fs[i].pos_dist = 4 - i;
    if (i != 0) fs[i].forward_alignment = double(i);
  }
  const auto c = factor_correlations(fs, {{"success", success}});
  ASSERT_EQ(c.size(), 12U);
  EXPECT_EQ(c[0].factor, "pos_dist");
  EXPECT_EQ(c[0].n, 4U);
  EXPECT_EQ(c[8].factor, "forward_alignment");
  EXPECT_EQ(c[8].n, 3U);
  EXPECT_FALSE(c[5].rho.has_value());  // vis_init_norm never defined
  EXPECT_THROW(factor_correlations(fs, {{"x", {1.0}}}), std::invalid_argument);
}

std::map<std::string, PairInfo> tiny_pairs() {
  std::vector<json> manifest;
  auto add = [&](const std::string& id, const Pose& target, const char* diff) {
    manifest.push_back({{"instance_id", id},
                        {"kind", "IVP"},
                        {"scene_id", "s"},
                        {"init_pose", pose_to_json(kFacingY)},
                        {"target_pose", pose_to_json(target)},
                        {"difficulty", diff}});
  };
  add("a", execute(kFacingY, ActionSequence{Action::MoveForward}), "Short");                 // 0.5 m, 0 deg
  add("b", execute(kFacingY, ActionSequence{Action::TurnLeft, Action::TurnLeft}), "Short");  // 60 deg
  add("c", execute(kFacingY, ActionSequence(4, Action::MoveForward)), "Long");               // 2 m
  add("d", execute(kFacingY, ActionSequence(4, Action::TurnRight)), "Long");                 // 120 deg
  return pairs_from_manifest(manifest);
}

TEST(SuccessTable, SplitsAndBins) {
  const auto pairs = tiny_pairs();
  EXPECT_EQ(pairs.at("a").kind, "ivp");
  EXPECT_EQ(pairs.at("c").difficulty, "long");
  const std::vector<ScoredSample> samples{{"a", true}, {"b", false}, {"c", true}, {"d", false}};
  const SuccessTable t = success_table(samples, pairs);
  EXPECT_EQ(*t.all.rate(), 0.5);
  EXPECT_EQ(*t.short_split.rate(), 0.5);
  EXPECT_EQ(*t.long_split.rate(), 0.5);
  EXPECT_EQ(t.difficulty_mismatches, 0U);
  // pair-weighted consistency
  EXPECT_EQ(t.short_split.successes + t.long_split.successes, t.all.successes);
  EXPECT_EQ(t.short_split.count + t.long_split.count, t.all.count);

  ASSERT_EQ(t.by_rotation.size(), 4U);
  EXPECT_EQ(t.by_rotation[0].cell.count, 2U);  // a, c at 0 deg
  EXPECT_EQ(t.by_rotation[1].cell.count, 1U);  // b at 60 deg (closed upper edge)
  EXPECT_EQ(t.by_rotation[2].cell.count, 0U);
  EXPECT_EQ(t.by_rotation[3].cell.count, 1U);  // d at 120 deg
  EXPECT_TRUE(std::isinf(t.by_rotation[3].hi));
  EXPECT_EQ(t.by_position[0].cell.count, 3U);  // a at 0.5 m plus b, d at 0
  EXPECT_EQ(t.by_position[2].cell.count, 1U);  // c at 2 m
  EXPECT_FALSE(t.by_rotation[2].cell.rate().has_value());

  const SuccessTable ok = success_table({{"a", true}, {"b", true}, {"c", true}, {"d", true}}, pairs);
  EXPECT_EQ(*ok.all.rate(), 1.0);
  for (const auto& b : ok.by_rotation) {
    if (b.cell.count) EXPECT_EQ(*b.cell.rate(), 1.0);
  }
  EXPECT_THROW(success_table({{"zz", true}}, pairs), std::invalid_argument);
  BinEdges bad;
  bad.rotation_deg = {0, 30, 30};
  EXPECT_THROW(success_table(samples, pairs, bad), std::invalid_argument);

  const std::string csv = success_table_csv(t);
  EXPECT_EQ(csv, "split,count,successes,rate\nshort,2,1,0.5\nlong,2,1,0.5\nall,4,2,0.5\n");
}

TEST(SuccessTable, ScoresChoices) {
  std::vector<json> manifest{{{"instance_id", "p"}, {"kind", "P2V"}, {"init_pose", pose_to_json(kFacingY)},
                              {"target_pose", pose_to_json(kFacingY)}, {"correct_index", 2}}};
  const auto pairs = pairs_from_manifest(manifest);
  const auto s = score_choices({{{"instance_id", "p"}, {"prediction", 2}}, {{"instance_id", "p"}, {"prediction", "A"}}},
                               pairs);
  ASSERT_EQ(s.size(), 2U);
  EXPECT_TRUE(s[0].success);
  EXPECT_FALSE(s[1].success);
  EXPECT_THROW(score_choices({{{"instance_id", "q"}, {"prediction", 0}}}, pairs), std::invalid_argument);
}

// Five points around a camera at (0, 0, 1.5): two ahead (+Y), one behind, one on
// each side. Visibility by heading is therefore known by construction.
Scene five_point_scene() {
  return Scene("five", {{0, 3, 1.5}, {0.5, 4, 1.5}, {0, -3, 1.5}, {3, 0, 1.5}, {-3, 0, 1.5}},
               {{200, 0, 0}, {0, 200, 0}, {0, 0, 200}, {200, 200, 0}, {0, 200, 200}});
}

EpisodeSummary turning_episode() {
  EpisodeSummary e;
  e.episode_id = "turning";
  e.instance_id = "x";
  e.scene_id = "five";
  e.variant = "default";
  e.init = kFacingY;
  e.target = execute(kFacingY, ActionSequence(6, Action::TurnRight));  // facing -Y
  e.poses = {kFacingY};
  e.turn_actions = {ActionSequence(3, Action::TurnRight), ActionSequence(3, Action::TurnRight), {}};
  for (const auto& a : e.turn_actions) e.poses.push_back(execute(e.poses.back(), a));
  e.turns = 3;
  return e;
}

EpisodeSummary stationary_episode() {
  EpisodeSummary e = turning_episode();
  e.episode_id = "still";
  e.turn_actions = {{}};
  e.poses = {kFacingY, kFacingY};
  e.turns = 1;
  return e;
}

TEST(Coverage, EnumeratedFivePointOracle) {
  const Scene scene = five_point_scene();
  CoverageOptions opt;
  opt.intrinsics = {128, 128, 60.0};
  // sanity: each cardinal heading sees exactly the points placed there
  EXPECT_EQ(visible_vertices(scene, kFacingY, opt.intrinsics), (VertexSet{0, 1}));
  EXPECT_EQ(visible_vertices(scene, turning_episode().target, opt.intrinsics), (VertexSet{2}));

  const auto r = coverage_curves({turning_episode(), stationary_episode()}, {{"five", &scene}}, opt);
  ASSERT_EQ(r.per_episode_scene.size(), 2U);
  const std::vector<double> turning_scene{0.4, 0.6, 0.8, 0.8};
  const std::vector<double> turning_target{0, 0, 1, 1};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(r.per_episode_scene[0][k], turning_scene[k]) << k;
    EXPECT_DOUBLE_EQ(r.per_episode_target[0][k], turning_target[k]) << k;
  }
  EXPECT_EQ(r.per_episode_scene[1], (std::vector<double>{0.4, 0.4}));
  EXPECT_EQ(r.per_episode_target[1], (std::vector<double>{0, 0}));

  EXPECT_EQ(r.scene.counts, (std::vector<std::size_t>{2, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(r.scene.mean[0], 0.4);
  EXPECT_DOUBLE_EQ(r.scene.mean[1], 0.5);
  EXPECT_DOUBLE_EQ(r.scene.stddev[1], 0.1);
  EXPECT_DOUBLE_EQ(r.scene.mean[3], 0.8);
  EXPECT_DOUBLE_EQ(r.target.mean[2], 1.0);
  EXPECT_EQ(r.scene.excluded_turns, 0U);

  for (const auto& curve : r.per_episode_scene) {
    for (std::size_t k = 1; k < curve.size(); ++k) EXPECT_GE(curve[k], curve[k - 1]);
  }
}

TEST(Coverage, ExclusionRuleAndErrors) {
  const CoverageCurve c = aggregate_curves({{0.1, 0.2, 0.3}, {0.1, 0.2}, {0.1}}, 0.5);
  EXPECT_EQ(c.counts, (std::vector<std::size_t>{3, 2}));  // 1 < 0.5 * 3
  EXPECT_EQ(c.excluded_turns, 1U);
  std::vector<std::vector<double>> many(150, std::vector<double>{0.5});
  many[0] = {0.5, 0.6};
  EXPECT_EQ(aggregate_curves(many).counts.size(), 1U);  // 1 of 150 is under 1%
  many[1] = {0.5, 0.6};
  EXPECT_EQ(aggregate_curves(many).counts.size(), 2U);  // 2 of 150 is not

  const Scene scene = five_point_scene();
  EpisodeSummary bad = turning_episode();
  bad.poses[2] = bad.poses[1];
  EXPECT_THROW(coverage_curves({bad}, {{"five", &scene}}), std::invalid_argument);
  EXPECT_THROW(coverage_curves({turning_episode()}, {}), std::invalid_argument);

  // stationary agent: constant curves
  const auto r = coverage_curves({stationary_episode()}, {{"five", &scene}});
  EXPECT_EQ(r.scene.mean.front(), r.scene.mean.back());
}

TEST(TurnDistribution, CountsMatchDirectCounting) {
  EXPECT_TRUE(turn_distribution({}).empty());
  std::mt19937_64 rng(4);
  std::vector<EpisodeSummary> eps(300);
  std::map<int, std::pair<std::size_t, std::size_t>> oracle;
  for (auto& e : eps) {
    e.turns = 1 + static_cast<int>(rng() % 10);
    e.success = rng() % 3 == 0;
    ++oracle[e.turns].first;
    oracle[e.turns].second += e.success;
  }
  const auto buckets = turn_distribution(eps);
  std::size_t total = 0;
  for (const auto& b : buckets) {
    EXPECT_EQ(b.count, oracle[b.turns].first);
    EXPECT_EQ(b.successes, oracle[b.turns].second);
    EXPECT_DOUBLE_EQ(b.rate(), double(b.successes) / double(b.count));
    total += b.count;
  }
  EXPECT_EQ(total, eps.size());
  std::vector<EpisodeSummary> tens(5);
  for (auto& e : tens) e.turns = 10;
  ASSERT_EQ(turn_distribution(tens).size(), 1U);
}

TEST(Plots, DrawSomething) {
  const RgbImage img = line_plot({{{0.1, 0.5, 0.9}, {0.05, 0.05, 0.05}, {200, 0, 0}}}, 0, 1, 200, 120);
  EXPECT_EQ(img.width, 200);
  EXPECT_EQ(img.rgb.size(), 200U * 120U * 3U);
  std::size_t red = 0;
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) red += img.rgb[i] == 200 && img.rgb[i + 1] == 0;
  EXPECT_GT(red, 50U);
  EXPECT_THROW(line_plot({}, 1, 1), std::invalid_argument);
  EXPECT_EQ(bar_plot({1, 2}, 2).height, 320);
}

TEST(RunAnalysis, EndToEndOnRollouts) {
  const Scene scene = five_point_scene();
  std::vector<json> manifest;
  std::vector<json> rollouts;
  for (int i = 0; i < 6; ++i) {
    EpisodeInstance inst;
    inst.instance_id = "five_" + std::to_string(i) + "_ivp";
    inst.scene_id = "five";
    inst.init = kFacingY;
    inst.gt_actions = ActionSequence(static_cast<std::size_t>(i + 1), Action::TurnRight);
    inst.target = execute(inst.init, inst.gt_actions);
    manifest.push_back({{"instance_id", inst.instance_id},
                        {"kind", "IVP"},
                        {"scene_id", "five"},
                        {"init_pose", pose_to_json(inst.init)},
                        {"target_pose", pose_to_json(inst.target)}});
    const Agent agent = i % 2 ? oracle_agent(inst) : random_agent(7 + i);
    for (const json& j : run_episode(inst, agent, ProtocolVariant::Default, "ep" + std::to_string(i)).to_jsonl()) {
      rollouts.push_back(j);
    }
  }
  const auto eps = episodes_from_rollouts(rollouts);
  ASSERT_EQ(eps.size(), 6U);
  EXPECT_TRUE(eps[1].success);
  EXPECT_EQ(eps[1].poses.size(), std::size_t(eps[1].turns) + 1);

  AnalysisInputs in;
  in.rollouts = rollouts;
  in.manifest = manifest;
  in.scenes = {{"five", &scene}};
  in.coverage.intrinsics = {128, 128, 60.0};
  const auto dir = fs::temp_directory_path() / "viewplan_analysis";
  fs::remove_all(dir);
  const json s = run_analysis(in, dir);
  EXPECT_EQ(s["episodes"], 6);
  EXPECT_EQ(s["tasks"]["ivp"]["all"]["count"], 6);
  EXPECT_GE(s["tasks"]["ivp"]["all"]["successes"].get<int>(), 3);
  for (const char* f : {"summary.json", "ivp_success.csv", "ivp_bins.csv", "factors.csv", "factor_correlations.csv",
                        "turn_distribution.csv", "coverage.csv", "coverage_scene.png", "turn_counts.png"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(read_png(dir / "coverage_scene.png").width, 480);

  std::vector<json> orphan(rollouts.begin(), rollouts.end() - 1);
  EXPECT_THROW(episodes_from_rollouts(orphan), std::invalid_argument);
}

}  // namespace
}  // namespace viewplan
