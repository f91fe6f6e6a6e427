#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "graph_fixtures.hpp"
#include "viewplan/episode.hpp"

namespace viewplan {
namespace {

namespace fs = std::filesystem;
using testing::forward_chain;
using testing::random_walk;

const Pose kStart = euler_compose({-90, 0, 0}, {0, 0, 1.5});

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("viewplan_graph_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(ViewGraph, ChainThenIdempotentReingest) {
  ViewGraph g;
  const GraphTrajectory t = forward_chain("s", 3, kStart);
  const MergeReport r1 = g.ingest(t);
  EXPECT_EQ(g.nodes().size(), 3U);
  EXPECT_EQ(g.edges().size(), 2U);
  EXPECT_EQ(r1.nodes_added, 3U);
  EXPECT_EQ(r1.edges_added, 2U);

  const MergeReport r2 = g.ingest(t);
  EXPECT_EQ(g.nodes().size(), 3U);
  EXPECT_EQ(g.edges().size(), 2U);
  EXPECT_EQ(r2.nodes_merged, 3U);
  EXPECT_EQ(r2.edges_deduped, 2U);
}

TEST(ViewGraph, NearbyStatesMerge) {
  ViewGraph g;
  GraphTrajectory a{"s", {{kStart, "a", true}}, {}};
  Pose near = kStart;
  near.position += Eigen::Vector3d(0.2, 0, 0);
  near.rotation = near.rotation * axis_rotation(1, 10.0);
  GraphTrajectory b{"s", {{near, "b", true}}, {}};
  g.ingest(a);
  EXPECT_EQ(g.ingest(b).nodes_merged, 1U);
  ASSERT_EQ(g.nodes().size(), 1U);
  EXPECT_EQ(g.nodes()[0].image_hash, "a");  // first write wins
  EXPECT_EQ(g.nodes()[0].pose, kStart);

  // Both thresholds must hold: close in position but 20 deg apart is a new node.
  Pose turned = kStart;
  turned.rotation = turned.rotation * axis_rotation(1, 20.0);
  g.ingest({"s", {{turned, "c", true}}, {}});
  EXPECT_EQ(g.nodes().size(), 2U);
  // Same pose in another scene is a separate node.
  g.ingest({"t", {{kStart, "d", true}}, {}});
  EXPECT_EQ(g.nodes().size(), 3U);
}

TEST(ViewGraph, LowQualityStatesAreBridged) {
  ViewGraph g;
  GraphTrajectory t;
  t.scene_id = "s";
  const ActionSequence a1 = {Action::MoveForward}, a2 = {Action::TurnLeft, Action::MoveUp};
  const Pose p1 = execute(kStart, a1), p2 = execute(p1, a2);
  t.states = {{kStart, "0", true}, {p1, "1", false}, {p2, "2", true}};
  t.actions = {a1, a2};
  const MergeReport r = g.ingest(t);
  EXPECT_EQ(r.states_dropped, 1U);
  ASSERT_EQ(g.edges().size(), 1U);
  EXPECT_EQ(g.edges()[0].actions, (ActionSequence{Action::MoveForward, Action::TurnLeft, Action::MoveUp}));
  EXPECT_EQ(g.nodes().size(), 2U);
}

TEST(ViewGraph, VoidViewIsDropped) {
  // A small patch in front of the start pose; looking away sees nothing.
  std::vector<Eigen::Vector3d> pts;
  std::vector<Rgb> cols;
  for (int i = -20; i <= 20; ++i) {
    for (int k = -20; k <= 20; ++k) {
      pts.emplace_back(i * 0.05, 2.0, 1.5 + k * 0.05);
      cols.push_back({static_cast<std::uint8_t>(100 + 3 * i), static_cast<std::uint8_t>(100 + 3 * k), 50});
    }
  }
  const Scene scene("s", pts, cols);
  GraphTrajectory t;
  t.scene_id = "s";
  const ActionSequence away(6, Action::TurnLeft), back(6, Action::TurnRight);
  const Pose p1 = execute(kStart, away);
  t.states = {{kStart, {}, true}, {p1, {}, true}, {execute(p1, back), {}, true}};
  t.actions = {away, back};
  const CameraIntrinsics intr{64, 48, 60.0};
  annotate_views(t, scene, intr);
  EXPECT_FALSE(t.states[1].quality_ok);
  EXPECT_GT(render_view(scene, p1, intr).void_fraction(), 0.7);
  ViewGraph g;
  const MergeReport r = g.ingest(t);
  EXPECT_EQ(r.states_dropped, 1U);
  EXPECT_EQ(r.self_loops, t.states[0].quality_ok && t.states[2].quality_ok ? 1U : 0U);
  EXPECT_THROW(annotate_views(t = {"other", {{kStart, {}, true}}, {}}, scene, intr), std::invalid_argument);
}

TEST(ViewGraph, RejectsMalformedTrajectories) {
  ViewGraph g;
  GraphTrajectory t = forward_chain("s", 3, kStart);
  t.actions[1] = {Action::TurnLeft};
  EXPECT_THROW(g.ingest(t), std::invalid_argument);
  t.actions.pop_back();
  EXPECT_THROW(g.ingest(t), std::invalid_argument);
  GraphTrajectory raw = forward_chain("s", 2, kStart);
  raw.snapped = false;
  EXPECT_THROW(g.ingest(raw), std::invalid_argument);
  EXPECT_TRUE(g.nodes().empty());
}

TEST(ViewGraph, StatsCounting) {
  EXPECT_EQ(format_stats_row(ViewGraph{}.stats()), "0 | 0 | 0 | 0.0 | 0.0");
  ViewGraph g;
  const int n = 25;
  for (int i = 0; i < n; ++i) {
    Pose start = kStart;
    start.position.x() += 2.0 * i;  // far apart, so nothing merges
    g.ingest(forward_chain("s", 2, start));
  }
  const GraphStats s = g.stats();
  EXPECT_EQ(s.nodes, 2U * n);
  EXPECT_EQ(s.edges, static_cast<std::size_t>(n));
  EXPECT_EQ(s.scenes, 1U);
  EXPECT_DOUBLE_EQ(s.avg_actions_per_edge, 1.0);
  EXPECT_EQ(format_stats_row({186, 4067, 2875, 4067.0 / 186, 1.6}), "186 | 4067 | 2875 | 21.9 | 1.6");
}

TEST(ViewGraph, DedupSeparationAndEdgeReplayOn500Nodes) {
  const ViewGraph g = testing::grown_graph(3, 500);
  ASSERT_GE(g.nodes().size(), 500U);
  const auto& ids = g.scene_nodes("s0");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      ASSERT_FALSE(g.within_dedup(g.node(ids[i]).pose, g.node(ids[j]).pose)) << ids[i] << " " << ids[j];
    }
  }
  for (const auto& e : g.edges()) {
    ASSERT_FALSE(e.actions.empty());
    ASSERT_NE(e.src, e.dst);
    EXPECT_TRUE(g.within_dedup(execute(g.node(e.src).pose, e.actions), g.node(e.dst).pose));
  }
}

TEST(ViewGraph, PersistLoadRoundTrip) {
  const ViewGraph g = testing::grown_graph(4, 100);
  const auto a = temp_dir("a"), b = temp_dir("b");
  g.persist(a);
  const ViewGraph h = ViewGraph::load(a);
  ASSERT_EQ(h.nodes().size(), g.nodes().size());
  ASSERT_EQ(h.edges().size(), g.edges().size());
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    EXPECT_EQ(h.nodes()[i].pose, g.nodes()[i].pose);
    EXPECT_EQ(h.nodes()[i].scene_id, g.nodes()[i].scene_id);
  }
  for (std::size_t i = 0; i < g.edges().size(); ++i) {
    EXPECT_EQ(h.edges()[i].src, g.edges()[i].src);
    EXPECT_EQ(h.edges()[i].dst, g.edges()[i].dst);
    EXPECT_EQ(h.edges()[i].actions, g.edges()[i].actions);
  }
  h.persist(b);
  for (const char* f : {"nodes.jsonl", "edges.jsonl", "meta.json"}) EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(ViewGraph, LoadErrors) {
  const auto empty = temp_dir("empty");
  fs::create_directories(empty);
  EXPECT_TRUE(ViewGraph::load(empty).nodes().empty());
  EXPECT_TRUE(ViewGraph::load(empty / "missing").nodes().empty());

  const auto dir = temp_dir("bad");
  ViewGraph g;
  g.ingest(forward_chain("s", 3, kStart));
  g.persist(dir);
  json meta = json::parse(read_file(dir / "meta.json"));
  meta["format_version"] = 99;
  write_file_atomic(dir / "meta.json", meta.dump());
  EXPECT_THROW(ViewGraph::load(dir), std::runtime_error);

  g.persist(dir);
  write_file_atomic(dir / "edges.jsonl", R"({"src":0,"dst":7,"actions":["move_forward"]})" "\n");
  EXPECT_THROW(ViewGraph::load(dir), std::runtime_error);
  write_file_atomic(dir / "edges.jsonl", "{not json\n");
  EXPECT_THROW(ViewGraph::load(dir), std::runtime_error);
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST(ActionDistribution, Frequencies) {
  EXPECT_TRUE(action_distribution(std::vector<ActionSequence>{}).empty());
  ViewGraph g;
  g.ingest(forward_chain("s", 2, kStart));
  const auto single = action_distribution(g);
  ASSERT_EQ(single.size(), 1U);
  EXPECT_DOUBLE_EQ(single.at(Action::MoveForward), 1.0);

  std::mt19937_64 rng(9);
  std::vector<ActionSequence> seqs;
  for (int i = 0; i < 10000; ++i) seqs.push_back(testing::random_actions(rng, 1));
  const auto d = action_distribution(seqs);
  double sum = 0.0;
  for (Action a : kAllActions) {
    EXPECT_NEAR(d.at(a), 1.0 / 12.0, 0.02);
    sum += d.at(a);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(ConcurrentBuilder, MatchesSequentialIngest) {
  std::mt19937_64 rng(12);
  std::vector<GraphTrajectory> trajs;
  for (int i = 0; i < 40; ++i) trajs.push_back(random_walk(rng, i % 2 ? "a" : "b", 8, testing::random_grid_pose(rng)));
  ViewGraph seq;
  MergeReport seq_total;
  for (const auto& t : trajs) seq_total += seq.ingest(t);

  ConcurrentGraphBuilder builder;
  for (const auto& t : trajs) builder.submit(t);
  EXPECT_LE(builder.snapshot()->nodes().size(), seq.nodes().size());
  auto [par, total] = builder.finish();
  EXPECT_EQ(par.nodes().size(), seq.nodes().size());
  EXPECT_EQ(par.edges().size(), seq.edges().size());
  EXPECT_EQ(total.nodes_added, seq_total.nodes_added);
  EXPECT_THROW(builder.submit(trajs[0]), std::logic_error);
}

TEST(ConcurrentBuilder, ManyProducersKeepInvariants) {
  ConcurrentGraphBuilder builder;
  std::vector<std::thread> producers;
  for (int p = 0; p < 4; ++p) {
    producers.emplace_back([&builder, p] {
      std::mt19937_64 rng(100 + p);
      for (int i = 0; i < 20; ++i) builder.submit(random_walk(rng, "s", 8, testing::random_grid_pose(rng)));
    });
  }
  // Readers see consistent snapshots while producers run.
  for (int i = 0; i < 20; ++i) {
    const auto snap = builder.snapshot();
    for (const auto& e : snap->edges()) ASSERT_LT(static_cast<std::size_t>(e.dst), snap->nodes().size());
  }
  for (auto& t : producers) t.join();
  GraphTrajectory bad = forward_chain("s", 2, kStart);
  bad.actions[0] = {Action::TurnLeft};
  builder.submit(bad);
  auto [g, total] = builder.finish();
  EXPECT_EQ(builder.errors().size(), 1U);
  EXPECT_EQ(total.nodes_added, g.nodes().size());
  const auto& ids = g.scene_nodes("s");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      ASSERT_FALSE(g.within_dedup(g.node(ids[i]).pose, g.node(ids[j]).pose));
    }
  }
}

TEST(Rollouts, LogsBecomeTrajectories) {
  EpisodeInstance inst;
  inst.scene_id = "s";
  inst.init = kStart;
  inst.gt_actions = {Action::MoveForward, Action::TurnLeft};
  inst.target = execute(inst.init, inst.gt_actions);
  std::vector<json> lines;
  for (int i = 0; i < 5; ++i) {
    const RolloutLog log = run_episode(inst, random_agent(40 + i), ProtocolVariant::Default, "ep" + std::to_string(i));
    for (auto& j : log.to_jsonl()) lines.push_back(j);
  }
  const auto trajs = trajectories_from_rollouts(lines, 2);
  ASSERT_EQ(trajs.size(), 5U);
  ViewGraph g;
  for (const auto& t : trajs) {
    EXPECT_EQ(t.iteration, 2);
    EXPECT_EQ(t.states.size(), t.actions.size() + 1);
    g.ingest(t);
  }
  EXPECT_GE(g.nodes().size(), 1U);
  lines.pop_back();  // drop the last outcome line
  EXPECT_THROW(trajectories_from_rollouts(lines), std::invalid_argument);
}

}  // namespace
}  // namespace viewplan
