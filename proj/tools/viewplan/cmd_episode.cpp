// episode-run, serve, calibrate, analyze

#include <iostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "common.hpp"
#include "viewplan/analysis.hpp"
#include "viewplan/calibration.hpp"
#include "viewplan/random.hpp"
#include "viewplan/server.hpp"

namespace viewplan::cli {
namespace {

namespace fs = std::filesystem;

std::vector<EpisodeInstance> ivp_instances(const std::string& manifest) {
  std::vector<EpisodeInstance> out;
  for (const json& j : read_jsonl(manifest)) {
    std::string kind = j.value("kind", std::string("IVP"));
    std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::toupper(c); });
    if (kind == "IVP") out.push_back(episode_instance_from_json(j));
  }
  return out;
}

ProtocolVariant variant_arg(const std::string& name) {
  const auto v = parse_variant(name);
  if (!v) throw UsageError("unknown variant '" + name + "' (default, no-snap, no-submit)");
  return *v;
}

std::set<std::string> scene_ids(const std::vector<EpisodeInstance>& insts) {
  std::set<std::string> ids;
  for (const auto& i : insts) ids.insert(i.scene_id);
  return ids;
}

struct EpisodeRunOpts {
  Common common;
  std::string manifest, scenes, agent = "oracle", variant, out;
  std::size_t limit = 0;
  bool no_render = false;
};

void run_episode_run(const EpisodeRunOpts& o) {
  const json cfg = o.common.config({"variant", "intrinsics", "render", "scene_root"});
  const ProtocolVariant variant = variant_arg(o.variant.empty() ? cfg.value("variant", "default") : o.variant);
  if (o.agent != "oracle" && o.agent != "random") throw UsageError("unknown agent '" + o.agent + "'");
  const std::uint64_t seed = o.common.seed_or(0);
  auto insts = ivp_instances(o.manifest);
  if (o.limit && insts.size() > o.limit) insts.resize(o.limit);

  const bool render = !o.no_render && cfg.value("render", true);
  std::map<std::string, std::shared_ptr<const Scene>> scenes;
  if (render) scenes = load_scenes(scene_root(o.scenes, cfg), scene_ids(insts));
  const CameraIntrinsics intr = intrinsics_from(cfg);

  std::vector<json> lines;
  std::size_t successes = 0;
  std::map<std::string, std::size_t> terminations;
  for (const auto& inst : insts) {
    const Agent agent = o.agent == "oracle" ? oracle_agent(inst) : random_agent(derive_seed(seed, inst.instance_id));
    EpisodeViews views;
    if (render) views = {scenes.at(inst.scene_id).get(), intr};
    const RolloutLog log = run_episode(inst, agent, variant, fmt::format("{}-{}-{}", o.agent, seed, inst.instance_id), views);
    successes += log.outcome.success;
    ++terminations[log.outcome.termination];
    for (json& j : log.to_jsonl()) lines.push_back(std::move(j));
  }
  if (!o.out.empty()) write_jsonl(o.out, lines);
  std::cout << fmt::format("episodes {} successes {} rate {:.4f}\n", insts.size(), successes,
                           insts.empty() ? 0.0 : double(successes) / double(insts.size()));
  for (const auto& [t, n] : terminations) std::cout << fmt::format("  {}: {}\n", t, n);
}

struct ServeOpts {
  Common common;
  std::string manifest, scenes, variant, log, host = "127.0.0.1";
  std::optional<unsigned short> port;
  bool stdio = false;
  bool no_render = false;
};

void run_serve(const ServeOpts& o) {
  const json cfg = o.common.config({"variant", "intrinsics", "render", "scene_root"});
  if (o.stdio == o.port.has_value()) throw UsageError("choose exactly one of --stdio and --port");
  ServerConfig sc;
  sc.variant = variant_arg(o.variant.empty() ? cfg.value("variant", "default") : o.variant);
  sc.seed = o.common.seed_or(0);
  sc.intrinsics = intrinsics_from(cfg);
  sc.render = !o.no_render && cfg.value("render", true);
  sc.log_path = o.log;
  auto insts = ivp_instances(o.manifest);
  std::map<std::string, std::shared_ptr<const Scene>> scenes;
  if (sc.render) scenes = load_scenes(scene_root(o.scenes, cfg), scene_ids(insts));
  spdlog::info("serving {} instances over {} scenes ({})", insts.size(), scenes.size(), to_string(sc.variant));
  EpisodeServer server(std::move(insts), std::move(scenes), sc);
  if (o.stdio) {
    std::ios::sync_with_stdio(false);
    server.serve_stream(std::cin, std::cout);
  } else {
    server.serve_tcp(o.host, *o.port, [](unsigned short p) { std::cout << "port " << p << std::endl; });
  }
}

struct CalibrateOpts {
  Common common;
  std::string records, out;
};

void run_calibrate(const CalibrateOpts& o) {
  const json cfg = o.common.config({"position_grid", "rotation_grid"});
  const auto records = as_usage("records", [&] { return calibration_records_from_jsonl(read_jsonl(o.records)); });
  const auto report = as_usage("calibration", [&] {
    return calibrate_thresholds(records, cfg.value("position_grid", kDefaultPositionGrid),
                                cfg.value("rotation_grid", kDefaultRotationGrid));
  });
  for (const auto& w : report.warnings) spdlog::warn("{}", w);
  std::cout << calibration_table(report);
  const auto& best = report.rows[report.best];
  std::cout << fmt::format("best position_m={:.2f} rotation_deg={:g} f1={:.3f}\n", best.position_m, best.rotation_deg,
                           best.f1);
  if (!o.out.empty()) write_file_atomic(o.out, calibration_csv(report));
}

struct AnalyzeOpts {
  Common common;
  std::vector<std::string> rollouts;
  std::string manifest, predictions, scenes, out;
  bool coverage = false;
};

void run_analyze(const AnalyzeOpts& o) {
  const json cfg = o.common.config(
      {"bins", "forward_axis", "min_count_fraction", "intrinsics", "steps", "scene_root"});
  AnalysisInputs in;
  in.rollouts = read_jsonl_files(o.rollouts);
  in.manifest = read_jsonl(o.manifest);
  if (!o.predictions.empty()) in.predictions = read_jsonl(o.predictions);
  in.factors.steps = in.coverage.steps = steps_from(cfg);
  const std::string axis = cfg.value("forward_axis", "+z");
  if (axis == "+z") {
    in.factors.forward = ForwardAxis::PlusZ;
  } else if (axis == "-z") {
    in.factors.forward = ForwardAxis::MinusZ;
  } else {
    throw UsageError("forward_axis must be \"+z\" or \"-z\"");
  }
  if (cfg.contains("bins")) {
    in.bins.rotation_deg = cfg["bins"].value("rotation_deg", in.bins.rotation_deg);
    in.bins.position_m = cfg["bins"].value("position_m", in.bins.position_m);
  }
  in.coverage.min_count_fraction = cfg.value("min_count_fraction", in.coverage.min_count_fraction);
  in.coverage.intrinsics = intrinsics_from(cfg);

  std::map<std::string, std::shared_ptr<const Scene>> owned;
  if (o.coverage) {
    std::set<std::string> ids;
    for (const json& j : in.rollouts) ids.insert(j.at("scene_id").get<std::string>());
    owned = load_scenes(scene_root(o.scenes, cfg), ids);
    for (const auto& [id, s] : owned) in.scenes[id] = s.get();
  }
  const json summary = as_usage("analysis", [&] { return run_analysis(in, o.out); });
  std::cout << summary.dump(2) << '\n';
}

}  // namespace

void register_episode_commands(CLI::App& app) {
  {
    auto o = std::make_shared<EpisodeRunOpts>();
    auto* sub = app.add_subcommand("episode-run", "Run IVP episodes with a built-in agent");
    add_common(sub, o->common);
    sub->add_option("--manifest", o->manifest, "Dataset manifest.jsonl")->required()->check(CLI::ExistingFile);
    sub->add_option("--scenes", o->scenes, "Scene root directory");
    sub->add_option("--agent", o->agent, "oracle or random");
    sub->add_option("--variant", o->variant, "default, no-snap or no-submit");
    sub->add_option("--out", o->out, "RolloutLog JSONL output");
    sub->add_option("--limit", o->limit, "Run at most this many instances");
    sub->add_flag("--no-render", o->no_render, "Skip rendering observations");
    sub->callback([o] { run_episode_run(*o); });
  }
  {
    auto o = std::make_shared<ServeOpts>();
    auto* sub = app.add_subcommand("serve", "Episode server over stdio or TCP (JSON lines)");
    add_common(sub, o->common);
    sub->add_option("--manifest", o->manifest, "Dataset manifest.jsonl")->required()->check(CLI::ExistingFile);
    sub->add_option("--scenes", o->scenes, "Scene root directory");
    sub->add_option("--variant", o->variant, "default, no-snap or no-submit");
    sub->add_option("--log", o->log, "RolloutLog JSONL sink");
    sub->add_flag("--stdio", o->stdio, "Serve one session on stdin/stdout");
    sub->add_option("--port", o->port, "TCP port (0 picks a free one)");
    sub->add_option("--host", o->host, "TCP bind address");
    sub->add_flag("--no-render", o->no_render, "Observations without images");
    sub->callback([o] { run_serve(*o); });
  }
  {
    auto o = std::make_shared<CalibrateOpts>();
    auto* sub = app.add_subcommand("calibrate", "Sweep success thresholds against human match labels");
    add_common(sub, o->common);
    sub->add_option("--records", o->records, "JSONL of {estimate, target, label}")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o->out, "CSV output");
    sub->callback([o] { run_calibrate(*o); });
  }
  {
    auto o = std::make_shared<AnalyzeOpts>();
    auto* sub = app.add_subcommand("analyze", "Success tables, factors, coverage and turn statistics");
    add_common(sub, o->common);
    sub->add_option("--rollouts", o->rollouts, "RolloutLog JSONL files")->required()->check(CLI::ExistingFile);
    sub->add_option("--manifest", o->manifest, "Dataset manifest.jsonl")->required()->check(CLI::ExistingFile);
    sub->add_option("--predictions", o->predictions, "P2V/V2P predictions JSONL");
    sub->add_option("--scenes", o->scenes, "Scene root directory (for coverage)");
    sub->add_flag("--coverage", o->coverage, "Replay rollouts against scenes for coverage curves and visual factors");
    sub->add_option("--out", o->out, "Output directory")->required();
    sub->callback([o] { run_analyze(*o); });
  }
}

}  // namespace viewplan::cli
