// render, topdown, make-scene, gen-data, plan

#include <iostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "common.hpp"
#include "viewplan/datagen.hpp"
#include "viewplan/image_io.hpp"
#include "viewplan/planner.hpp"
#include "viewplan/random.hpp"

namespace viewplan::cli {
namespace {

namespace fs = std::filesystem;

struct RenderOpts {
  Common common;
  std::string scene, scenes, pose, out;
  bool topdown = false;
};

void run_render(const RenderOpts& o) {
  const json cfg = o.common.config({"intrinsics", "scene_root"});
  const CameraIntrinsics intr = intrinsics_from(cfg);
  const Scene scene = load_scene_arg(o.scene, scene_root(o.scenes, cfg));
  const Pose pose = o.topdown ? topdown_pose(scene, intr) : parse_pose_arg(o.pose);
  const RenderedView view = render_view(scene, pose, intr);
  write_png(o.out, to_image(view));
  const QualityVerdict q = quality_check(view);
  std::cout << fmt::format("{} {}x{} void={:.3f} quality={}\n", o.out, intr.width, intr.height, q.void_fraction,
                           q.pass ? "ok" : q.reason);
}

struct MakeSceneOpts {
  Common common;
  std::string out;
  int count = 1;
  std::optional<std::size_t> vertices;
};

void run_make_scene(const MakeSceneOpts& o) {
  const json cfg = o.common.config({"size_x", "size_y", "height", "box_count", "vertex_count"});
  ProceduralSpec spec;
  spec.size_x = cfg.value("size_x", spec.size_x);
  spec.size_y = cfg.value("size_y", spec.size_y);
  spec.height = cfg.value("height", spec.height);
  spec.box_count = cfg.value("box_count", spec.box_count);
  spec.vertex_count = o.vertices.value_or(cfg.value("vertex_count", spec.vertex_count));
  const std::uint64_t seed = o.common.seed_or(0);
  if (o.count < 1) throw UsageError("--count must be >= 1");
  if (o.count == 1 && fs::path(o.out).extension() == ".ply") {
    const Scene s = procedural_scene(seed, spec, fs::path(o.out).stem().string());
    write_scene(s, o.out);
    std::cout << fmt::format("{} {} vertices\n", o.out, s.size());
    return;
  }
  fs::create_directories(o.out);
  for (int i = 0; i < o.count; ++i) {
    const std::string id = fmt::format("proc_{:04d}", i);
    const Scene s = procedural_scene(derive_seed(seed, id), spec, id);
    write_scene(s, fs::path(o.out) / (id + ".ply"));
  }
  std::cout << fmt::format("{} scenes in {}\n", o.count, o.out);
}

struct GenDataOpts {
  Common common;
  std::string scenes, out, verdicts;
  unsigned threads = 1;
  bool procedural_trajectories = false;
};

std::optional<Trajectory> load_trajectory(const fs::path& path) {
  if (!fs::is_regular_file(path)) return std::nullopt;
  Trajectory t;
  for (const json& j : read_jsonl(path)) t.frames.push_back(pose_from_json(j.is_object() ? j.at("pose") : j));
  return t;
}

void run_gen_data(const GenDataOpts& o) {
  json cfg_json = o.common.config({"pipeline", "scene_root"});
  PipelineConfig cfg = as_usage("config", [&] {
    return pipeline_config_from_json(cfg_json.value("pipeline", json::object()));
  });
  if (o.common.seed) cfg.seed = *o.common.seed;
  const fs::path root = scene_root(o.scenes, cfg_json);
  if (!fs::is_directory(root)) throw UsageError("scene root " + root.string() + " is not a directory");

  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.path().extension() == ".ply") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (!o.verdicts.empty()) ids = filter_scenes(ids, o.verdicts);
  if (ids.empty()) throw std::runtime_error("no scenes under " + root.string());

  std::vector<SceneInput> inputs;
  std::size_t with_traj = 0;
  for (const auto& id : ids) {
    Scene scene = load_scene(root / (id + ".ply"), id);
    auto traj = load_trajectory(root / (id + ".trajectory.jsonl"));
    if (!traj && o.procedural_trajectories) traj = procedural_trajectory(scene, derive_seed(cfg.seed, id + "/trajectory"));
    with_traj += traj.has_value();
    inputs.push_back({std::move(scene), std::move(traj)});
  }
  spdlog::info("{} scenes ({} with trajectories)", inputs.size(), with_traj);
  const PipelineResult r = run_pipeline(inputs, cfg, o.out, std::max(1U, o.threads));
  std::cout << fmt::format("pairs {} instances {} -> {}\n", r.stats.pairs, r.stats.instances,
                           (fs::path(o.out) / "manifest.jsonl").string());
  for (const auto& [reason, n] : r.stats.skips) std::cout << fmt::format("  skipped {}: {}\n", reason, n);
}

struct PlanOpts {
  Common common;
  std::string init, target;
  bool json_out = false;
};

void run_plan(const PlanOpts& o) {
  const json cfg = o.common.config({"steps", "k_max", "step_penalty", "snap"});
  PlannerConfig pc;
  pc.steps = steps_from(cfg);
  if (cfg.contains("k_max")) {
    pc.k_max_rotation = cfg["k_max"].at(0).get<int>();
    pc.k_max_translation = cfg["k_max"].at(1).get<int>();
  }
  pc.step_penalty = cfg.value("step_penalty", pc.step_penalty);
  pc.snap = cfg.value("snap", pc.snap);
  const PlanResult r = plan_actions(parse_pose_arg(o.init), parse_pose_arg(o.target), pc);
  if (o.json_out) {
    std::cout << json{{"actions", actions_to_json(r.actions)},
                      {"initial_error", r.initial_error},
                      {"final_error", r.final_error}}
                     .dump()
              << '\n';
    return;
  }
  for (Action a : r.actions) std::cout << to_string(a) << '\n';
  spdlog::info("{} actions, final error {:.6g}", r.actions.size(), r.final_error);
}

}  // namespace

void register_data_commands(CLI::App& app) {
  for (const bool topdown : {false, true}) {
    auto o = std::make_shared<RenderOpts>();
    o->topdown = topdown;
    auto* sub = app.add_subcommand(topdown ? "topdown" : "render",
                                   topdown ? "Render the top-down overview of a scene to PNG"
                                           : "Render a camera pose to PNG");
    add_common(sub, o->common);
    sub->add_option("--scene", o->scene, "PLY file or scene id under the scene root")->required();
    sub->add_option("--scenes", o->scenes, "Scene root directory");
    if (!topdown) sub->add_option("--pose", o->pose, "x,y,z,rx,ry,rz (degrees) or 16 matrix entries")->required();
    sub->add_option("--out", o->out, "Output PNG")->required();
    sub->callback([o] { run_render(*o); });
  }
  {
    auto o = std::make_shared<MakeSceneOpts>();
    auto* sub = app.add_subcommand("make-scene", "Write procedural room scenes as PLY");
    add_common(sub, o->common);
    sub->add_option("--out", o->out, "Output .ply file, or a directory with --count")->required();
    sub->add_option("--count", o->count, "Number of scenes");
    sub->add_option("--vertices", o->vertices, "Points per scene");
    sub->callback([o] { run_make_scene(*o); });
  }
  {
    auto o = std::make_shared<GenDataOpts>();
    auto* sub = app.add_subcommand("gen-data", "Build the P2V/V2P/IVP dataset from a scene directory");
    add_common(sub, o->common);
    sub->add_option("--scenes", o->scenes, "Directory of <scene>.ply (and optional <scene>.trajectory.jsonl)");
    sub->add_option("--out", o->out, "Output directory")->required();
    sub->add_option("--verdicts", o->verdicts, "JSONL of {scene_id, verdict} good/bad labels");
    sub->add_option("--threads", o->threads, "Worker threads");
    sub->add_flag("--procedural-trajectories", o->procedural_trajectories,
                  "Walk a procedural trajectory for scenes without a trajectory file");
    sub->callback([o] { run_gen_data(*o); });
  }
  {
    auto o = std::make_shared<PlanOpts>();
    auto* sub = app.add_subcommand("plan", "Greedy action plan between two poses");
    add_common(sub, o->common);
    sub->add_option("--init", o->init, "Initial pose")->required();
    sub->add_option("--target", o->target, "Target pose")->required();
    sub->add_flag("--json", o->json_out, "Print a JSON object instead of one action per line");
    sub->callback([o] { run_plan(*o); });
  }
}

}  // namespace viewplan::cli
