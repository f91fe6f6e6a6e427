// graph-build, graph-stats, graph-sample, distill

#include <iostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "common.hpp"
#include "viewplan/distill.hpp"
#include "viewplan/random.hpp"
#include "viewplan/view_graph.hpp"

namespace viewplan::cli {
namespace {

namespace fs = std::filesystem;

GraphConfig graph_config_from(const json& cfg) {
  GraphConfig g;
  g.dedup_position_m = cfg.value("dedup_position_m", g.dedup_position_m);
  g.dedup_rotation_deg = cfg.value("dedup_rotation_deg", g.dedup_rotation_deg);
  g.steps = steps_from(cfg);
  g.snap = cfg.value("snap", g.snap);
  if (!(g.dedup_position_m >= 0) || !(g.dedup_rotation_deg >= 0)) throw UsageError("dedup thresholds must be >= 0");
  return g;
}

bool graph_exists(const fs::path& dir) { return fs::is_regular_file(dir / "meta.json"); }

struct BuildOpts {
  Common common;
  std::vector<std::string> rollouts;
  std::string graph, scenes;
  int iteration = 0;
  bool images = false;
};

void run_graph_build(const BuildOpts& o) {
  const json cfg = o.common.config(
      {"dedup_position_m", "dedup_rotation_deg", "steps", "snap", "intrinsics", "scene_root"});
  ViewGraph g = graph_exists(o.graph) ? ViewGraph::load(o.graph) : ViewGraph(graph_config_from(cfg));
  if (graph_exists(o.graph) && o.common.config_path.size()) {
    spdlog::warn("{} exists; its stored dedup config wins over --config", o.graph);
  }
  auto trajs = as_usage("rollouts", [&] { return trajectories_from_rollouts(read_jsonl_files(o.rollouts), o.iteration); });

  if (o.images) {
    std::set<std::string> ids;
    for (const auto& t : trajs) ids.insert(t.scene_id);
    const auto scenes = load_scenes(scene_root(o.scenes, cfg), ids);
    const CameraIntrinsics intr = intrinsics_from(cfg);
    for (auto& t : trajs) annotate_views(t, *scenes.at(t.scene_id), intr, fs::path(o.graph) / "images");
  }
  MergeReport total;
  for (const auto& t : trajs) total += as_usage("trajectory", [&] { return g.ingest(t); });
  g.persist(o.graph);
  std::cout << fmt::format(
      "trajectories {} nodes +{} merged {} dropped {} edges +{} deduped {} self-loops {} rejected {}\n", trajs.size(),
      total.nodes_added, total.nodes_merged, total.states_dropped, total.edges_added, total.edges_deduped,
      total.self_loops, total.edges_rejected);
  std::cout << "Scenes | Nodes | Edges | Avg nodes/scene | Avg actions/edge\n" << format_stats_row(g.stats()) << '\n';
}

struct StatsOpts {
  Common common;
  std::string graph;
  bool json_out = false;
};

void run_graph_stats(const StatsOpts& o) {
  (void)o.common.config({});
  if (!graph_exists(o.graph)) throw UsageError("no graph at " + o.graph);
  const ViewGraph g = ViewGraph::load(o.graph);
  const GraphStats s = g.stats();
  const auto dist = action_distribution(g);
  if (o.json_out) {
    json d = json::object();
    for (const auto& [a, f] : dist) d[std::string(to_string(a))] = f;
    std::cout << json{{"scenes", s.scenes},
                      {"nodes", s.nodes},
                      {"edges", s.edges},
                      {"avg_nodes_per_scene", s.avg_nodes_per_scene},
                      {"avg_actions_per_edge", s.avg_actions_per_edge},
                      {"action_distribution", d}}
                     .dump()
              << '\n';
    return;
  }
  std::cout << "Scenes | Nodes | Edges | Avg nodes/scene | Avg actions/edge\n" << format_stats_row(s) << "\n\n";
  for (const auto& [a, f] : dist) std::cout << fmt::format("{:<14} {:6.2f}%\n", to_string(a), 100.0 * f);
}

struct SampleOpts {
  Common common;
  std::string graph, scene;
  int min_length = 3, max_length = 5, count = 10;
  bool balanced = false;
};

void run_graph_sample(const SampleOpts& o) {
  (void)o.common.config({});
  if (!graph_exists(o.graph)) throw UsageError("no graph at " + o.graph);
  const ViewGraph g = ViewGraph::load(o.graph);
  Rng rng(derive_seed(o.common.seed_or(0), o.scene));
  const auto paths = as_usage("sample", [&] {
    return sample_paths(g, o.scene, o.min_length, o.max_length, o.count, o.balanced, rng);
  });
  for (const auto& p : paths) {
    std::cout << json{{"scene_id", o.scene},
                      {"nodes", p.nodes},
                      {"edges", p.edges},
                      {"actions", actions_to_json(path_actions(g, p))}}
                     .dump()
              << '\n';
  }
  if (paths.size() < static_cast<std::size_t>(o.count)) {
    spdlog::warn("only {} of {} paths found", paths.size(), o.count);
  }
}

struct DistillOpts {
  Common common;
  std::string graph, out;
  unsigned threads = 1;
};

void run_distill_cmd(const DistillOpts& o) {
  const json cfg_json = o.common.config({"planning", "viewdiff", "dynamics", "seed"});
  DistillConfig cfg = as_usage("config", [&] { return distill_config_from_json(cfg_json); });
  if (o.common.seed) cfg.seed = *o.common.seed;
  if (!graph_exists(o.graph)) throw UsageError("no graph at " + o.graph);
  const ViewGraph g = ViewGraph::load(o.graph);
  const DistillResult r = as_usage("distill", [&] { return run_distill(g, cfg, std::max(1U, o.threads)); });
  write_distill(r, o.out);
  std::cout << fmt::format("{} records -> {}\n", r.records.size(), (fs::path(o.out) / "demos.jsonl").string());
  for (const auto& [kind, n] : r.counts) std::cout << fmt::format("  {}: {}\n", kind, n);
}

}  // namespace

void register_graph_commands(CLI::App& app) {
  {
    auto o = std::make_shared<BuildOpts>();
    auto* sub = app.add_subcommand("graph-build", "Merge rollout trajectories into a persistent view graph");
    add_common(sub, o->common);
    sub->add_option("--rollouts", o->rollouts, "RolloutLog JSONL files")->required()->check(CLI::ExistingFile);
    sub->add_option("--graph", o->graph, "Graph directory (created if missing)")->required();
    sub->add_option("--iteration", o->iteration, "Collection iteration tag for new nodes");
    sub->add_flag("--images", o->images, "Render states and store images/<hash>.png");
    sub->add_option("--scenes", o->scenes, "Scene root directory (with --images)");
    sub->callback([o] { run_graph_build(*o); });
  }
  {
    auto o = std::make_shared<StatsOpts>();
    auto* sub = app.add_subcommand("graph-stats", "Graph statistics and action distribution");
    add_common(sub, o->common);
    sub->add_option("--graph", o->graph, "Graph directory")->required();
    sub->add_flag("--json", o->json_out, "JSON output");
    sub->callback([o] { run_graph_stats(*o); });
  }
  {
    auto o = std::make_shared<SampleOpts>();
    auto* sub = app.add_subcommand("graph-sample", "Sample simple paths from one scene (JSONL to stdout)");
    add_common(sub, o->common);
    sub->add_option("--graph", o->graph, "Graph directory")->required();
    sub->add_option("--scene", o->scene, "Scene id")->required();
    sub->add_option("--min", o->min_length, "Minimum path length (edges)");
    sub->add_option("--max", o->max_length, "Maximum path length (edges)");
    sub->add_option("--count", o->count, "Number of paths");
    sub->add_flag("--balanced", o->balanced, "Equal counts per length");
    sub->callback([o] { run_graph_sample(*o); });
  }
  {
    auto o = std::make_shared<DistillOpts>();
    auto* sub = app.add_subcommand("distill", "Turn a view graph into training demonstrations");
    add_common(sub, o->common);
    sub->add_option("--graph", o->graph, "Graph directory")->required();
    sub->add_option("--out", o->out, "Output directory")->required();
    sub->add_option("--threads", o->threads, "Worker threads");
    sub->callback([o] { run_distill_cmd(*o); });
  }
}

}  // namespace viewplan::cli
