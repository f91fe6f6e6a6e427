#include "viewplan/distill.hpp"

#include <algorithm>
#include <array>
#include <future>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "viewplan/image_io.hpp"

namespace viewplan {

void DistillConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("distill config: " + why); };
  if (planning_min_length < 1 || planning_min_length > planning_max_length) fail("planning length bounds");
  if (viewdiff_min_length < 1 || viewdiff_min_length > viewdiff_max_length) fail("viewdiff length bounds");
  if (planning_per_scene < 0 || viewdiff_per_scene < 0 || mcq_per_scene < 0 || dynamics_per_scene < 0) {
    fail("counts must be >= 0");
  }
  if (oversample < 1) fail("oversample must be >= 1");
  if (mcq_options < 2) fail("mcq_options must be >= 2");
  if (forward_candidates < 2) fail("forward_candidates must be >= 2");
  if (!(mcq_separation >= 0)) fail("mcq_separation must be >= 0");
}

json to_json(const DistillConfig& c) {
  return {
      {"planning", {{"length", {c.planning_min_length, c.planning_max_length}},
                    {"per_scene", c.planning_per_scene},
                    {"balanced", c.planning_balanced},
                    {"oversample", c.oversample}}},
      {"viewdiff", {{"length", {c.viewdiff_min_length, c.viewdiff_max_length}},
                    {"per_scene", c.viewdiff_per_scene},
                    {"mcq_per_scene", c.mcq_per_scene},
                    {"balanced", c.viewdiff_balanced},
                    {"mcq_separation", c.mcq_separation},
                    {"mcq_options", c.mcq_options}}},
      {"dynamics", {{"enabled", c.emit_dynamics},
                    {"per_scene", c.dynamics_per_scene},
                    {"forward_candidates", c.forward_candidates}}},
      {"seed", c.seed},
  };
}

DistillConfig distill_config_from_json(const json& j) {
  DistillConfig c;
  auto section = [](const json& s, const std::set<std::string>& allowed, const std::string& name) {
    for (const auto& [k, _] : s.items()) {
      if (!allowed.count(k)) throw std::invalid_argument("unknown config key " + name + "." + k);
    }
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "planning") {
      section(v, {"length", "per_scene", "balanced", "oversample"}, key);
      if (v.contains("length")) {
        c.planning_min_length = v["length"].at(0).get<int>();
        c.planning_max_length = v["length"].at(1).get<int>();
      }
      c.planning_per_scene = v.value("per_scene", c.planning_per_scene);
      c.planning_balanced = v.value("balanced", c.planning_balanced);
      c.oversample = v.value("oversample", c.oversample);
    } else if (key == "viewdiff") {
      section(v, {"length", "per_scene", "mcq_per_scene", "balanced", "mcq_separation", "mcq_options"}, key);
      if (v.contains("length")) {
        c.viewdiff_min_length = v["length"].at(0).get<int>();
        c.viewdiff_max_length = v["length"].at(1).get<int>();
      }
      c.viewdiff_per_scene = v.value("per_scene", c.viewdiff_per_scene);
      c.mcq_per_scene = v.value("mcq_per_scene", c.mcq_per_scene);
      c.viewdiff_balanced = v.value("balanced", c.viewdiff_balanced);
      c.mcq_separation = v.value("mcq_separation", c.mcq_separation);
      c.mcq_options = v.value("mcq_options", c.mcq_options);
    } else if (key == "dynamics") {
      section(v, {"enabled", "per_scene", "forward_candidates"}, key);
      c.emit_dynamics = v.value("enabled", c.emit_dynamics);
      c.dynamics_per_scene = v.value("per_scene", c.dynamics_per_scene);
      c.forward_candidates = v.value("forward_candidates", c.forward_candidates);
    } else if (key == "seed") {
      c.seed = v.get<std::uint64_t>();
    } else {
      throw std::invalid_argument("unknown config key " + key);
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Path sampling

namespace {

std::optional<GraphPath> random_walk(const ViewGraph& g, const std::vector<NodeId>& nodes, int length, Rng& rng) {
  GraphPath p;
  p.nodes.push_back(nodes[uniform_index(rng, nodes.size())]);
  std::set<NodeId> visited{p.nodes.back()};
  std::vector<std::size_t> options;
  for (int step = 0; step < length; ++step) {
    options.clear();
    for (std::size_t e : g.out_edges(p.nodes.back())) {
      if (!visited.count(g.edges()[e].dst)) options.push_back(e);
    }
    if (options.empty()) return std::nullopt;
    const std::size_t e = options[uniform_index(rng, options.size())];
    p.edges.push_back(e);
    p.nodes.push_back(g.edges()[e].dst);
    visited.insert(p.nodes.back());
  }
  return p;
}

}  // namespace

std::vector<GraphPath> sample_paths(const ViewGraph& g, const std::string& scene, int min_length, int max_length,
                                    int count, bool balanced, Rng& rng) {
  if (min_length < 1 || min_length > max_length) throw std::invalid_argument("bad path length range");
  const auto& nodes = g.scene_nodes(scene);
  std::vector<GraphPath> out;
  if (nodes.empty() || count <= 0) return out;
  std::set<std::vector<NodeId>> seen;
  auto try_walk = [&](int length) {
    auto p = random_walk(g, nodes, length, rng);
    if (!p || !seen.insert(p->nodes).second) return false;
    out.push_back(std::move(*p));
    return true;
  };

  if (!balanced) {
    for (int attempt = 0; attempt < 30 * count + 30 && static_cast<int>(out.size()) < count; ++attempt) {
      try_walk(min_length + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_length - min_length + 1))));
    }
  } else {
    const int buckets = max_length - min_length + 1;
    std::vector<int> quota(static_cast<std::size_t>(buckets), count / buckets);
    for (int b = 0; b < count % buckets; ++b) ++quota[static_cast<std::size_t>(b)];
    std::vector<int> got(quota.size(), 0);
    for (std::size_t b = 0; b < quota.size(); ++b) {
      for (int attempt = 0; attempt < 30 * quota[b] + 30 && got[b] < quota[b]; ++attempt) {
        got[b] += try_walk(min_length + static_cast<int>(b));
      }
    }
    // Backfill round-robin from the lengths that filled their quota.
    int deficit = 0;
    for (std::size_t b = 0; b < quota.size(); ++b) deficit += quota[b] - got[b];
    std::vector<std::size_t> full;
    for (std::size_t b = 0; b < quota.size(); ++b) {
      if (got[b] == quota[b] && quota[b] > 0) full.push_back(b);
    }
    for (int attempt = 0; deficit > 0 && !full.empty() && attempt < 30 * deficit + 30; ++attempt) {
      const std::size_t b = full[static_cast<std::size_t>(attempt) % full.size()];
      deficit -= try_walk(min_length + static_cast<int>(b));
    }
  }
  if (static_cast<int>(out.size()) < count) {
    spdlog::info("scene {}: sampled {} of {} paths in [{}, {}]", scene, out.size(), count, min_length, max_length);
  }
  return out;
}

ActionSequence path_actions(const ViewGraph& g, const GraphPath& p) {
  ActionSequence out;
  for (std::size_t e : p.edges) {
    const auto& a = g.edges()[e].actions;
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

json image_ref(const ViewNode& n) {
  if (n.image_hash.empty()) return nullptr;
  return "images/" + n.image_hash + ".png";
}

// ---------------------------------------------------------------------------
// Reformulations

namespace {

constexpr std::array<std::string_view, 3> kPlanningInstructions = {
    "You control a camera in a 3D scene. Move until your view matches the target view, then answer with your pose.",
    "Reach the viewpoint shown in the target image using the camera actions, then submit your estimated pose.",
    "Navigate the camera step by step toward the target view; when you are there, answer with the 6-DoF pose.",
};

json image_part(const ViewNode& n, const char* role) {
  return {{"type", "image"}, {"ref", image_ref(n)}, {"node", n.id}, {"role", role}};
}

json text_part(std::string text) { return {{"type", "text"}, {"text", std::move(text)}}; }

json message(const char* role, json content) { return {{"role", role}, {"content", std::move(content)}}; }

json pair_head(const ViewGraph& g, const std::string& kind, const std::string& demo_id, std::uint64_t seed,
               NodeId a, NodeId b) {
  return {{"kind", kind},
          {"demo_id", demo_id},
          {"scene_id", g.node(a).scene_id},
          {"seed", seed},
          {"nodes", {a, b}},
          {"images", {{"a", image_ref(g.node(a))}, {"b", image_ref(g.node(b))}}}};
}

std::string letter(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

}  // namespace

std::vector<json> reformulate_planning(const ViewGraph& g, const GraphPath& p, const DistillConfig& cfg,
                                       const std::string& demo_id) {
  if (p.length() < 3 || p.length() > 5) {
    throw std::invalid_argument(fmt::format("planning paths need 3-5 edges, got {}", p.length()));
  }
  const ViewNode& v0 = g.node(p.nodes.front());
  const ViewNode& vk = g.node(p.nodes.back());
  if (!g.within_dedup(execute(v0.pose, path_actions(g, p), g.config().steps, g.config().snap), vk.pose)) {
    spdlog::info("planning demo {} skipped: path does not replay onto its end node", demo_id);
    return {};
  }

  json turns = json::array();
  json messages_tail = json::array();
  for (std::size_t i = 0; i < p.length(); ++i) {
    const auto& actions = g.edges()[p.edges[i]].actions;
    const ViewNode& after = g.node(p.nodes[i + 1]);
    turns.push_back({{"actions", actions_to_json(actions)}, {"node", after.id}, {"pose", pose_to_json(after.pose)}});
    messages_tail.push_back(message("assistant", "<action>" + join_actions(actions, "|") + "</action>"));
    messages_tail.push_back(message(
        "user", {image_part(after, "current"), text_part("Current pose: " + format_pose_prompt(after.pose))}));
  }
  const PoseVector answer = to_vector(vk.pose);
  messages_tail.push_back(message("assistant", fmt::format("<action>answer({}, {}, {}, {}, {}, {})</action>",
                                                           answer[0], answer[1], answer[2], answer[3], answer[4],
                                                           answer[5])));

  std::vector<json> out;
  for (int k = 0; k < cfg.oversample; ++k) {
    const std::uint64_t seed = derive_seed(cfg.seed, fmt::format("{}#{}", demo_id, k));
    Rng rng(seed);
    const std::size_t variant = uniform_index(rng, kPlanningInstructions.size());
    json messages = json::array();
    messages.push_back(message("system", std::string(kPlanningInstructions[variant])));
    messages.push_back(message("user", {image_part(v0, "current"), image_part(vk, "target"),
                                        text_part("Current pose: " + format_pose_prompt(v0.pose))}));
    for (const auto& m : messages_tail) messages.push_back(m);
    out.push_back({{"kind", "planning"},
                   {"demo_id", fmt::format("{}#{}", demo_id, k)},
                   {"scene_id", v0.scene_id},
                   {"seed", seed},
                   {"instruction_variant", variant},
                   {"path", {{"nodes", p.nodes}, {"edges", p.edges}}},
                   {"images", {{"init", image_ref(v0)}, {"target", image_ref(vk)}}},
                   {"init_pose", pose_to_json(v0.pose)},
                   {"turns", turns},
                   {"answer", pose_to_json(vk.pose)},
                   {"messages", std::move(messages)}});
  }
  return out;
}

json reformulate_viewdiff(const ViewGraph& g, NodeId a, NodeId b, std::size_t path_length, const std::string& demo_id,
                          std::uint64_t seed) {
  if (g.node(a).scene_id != g.node(b).scene_id) throw std::invalid_argument("viewdiff nodes must share a scene");
  const double d = view_distance(g.node(a).pose, g.node(b).pose, g.config().steps).unified;
  json j = pair_head(g, "viewdiff", demo_id, seed, a, b);
  j["path_length"] = path_length;
  j["label"] = d;
  j["messages"] = {
      message("user", {image_part(g.node(a), "first"), image_part(g.node(b), "second"),
                       text_part("Estimate the unified view distance between the two views.")}),
      message("assistant", fmt::format("{:.2f}", d)),
  };
  return j;
}

std::optional<json> reformulate_mcq(const ViewGraph& g, NodeId a, NodeId b, std::size_t path_length,
                                    const DistillConfig& cfg, const std::string& demo_id, Rng& rng) {
  const auto& steps = g.config().steps;
  const double correct = view_distance(g.node(a).pose, g.node(b).pose, steps).unified;
  const auto& nodes = g.scene_nodes(g.node(a).scene_id);
  std::vector<double> options{correct};
  if (nodes.size() >= 3) {
    for (int attempt = 0; attempt < 200 && static_cast<int>(options.size()) < cfg.mcq_options; ++attempt) {
      const NodeId u = nodes[uniform_index(rng, nodes.size())];
      const NodeId v = nodes[uniform_index(rng, nodes.size())];
      if (u == v || (u == a && v == b) || (u == b && v == a)) continue;
      const double d = view_distance(g.node(u).pose, g.node(v).pose, steps).unified;
      const bool separated = std::all_of(options.begin(), options.end(),
                                         [&](double o) { return std::abs(o - d) >= cfg.mcq_separation; });
      if (separated) options.push_back(d);
    }
  }
  if (static_cast<int>(options.size()) < cfg.mcq_options) {
    spdlog::info("mcq {} skipped: only {} separated distances", demo_id, options.size());
    return std::nullopt;
  }
  std::vector<std::size_t> order(options.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order.begin(), order.end(), rng);
  json shuffled = json::array();
  std::string text = "Which value is the unified view distance between the two views?";
  int correct_index = -1;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == 0) correct_index = static_cast<int>(i);
    shuffled.push_back(options[order[i]]);
    text += fmt::format("\n{}. {:.2f}", letter(i), options[order[i]]);
  }
  json j = pair_head(g, "viewdiff_mcq", demo_id, 0, a, b);
  j.erase("seed");
  j["path_length"] = path_length;
  j["options"] = shuffled;
  j["correct_index"] = correct_index;
  j["label"] = correct;
  j["messages"] = {
      message("user", {image_part(g.node(a), "first"), image_part(g.node(b), "second"), text_part(text)}),
      message("assistant", letter(static_cast<std::size_t>(correct_index))),
  };
  return j;
}

json reformulate_inverse_dynamics(const ViewGraph& g, const GraphPath& p, const std::string& demo_id,
                                  std::uint64_t seed) {
  const ActionSequence actions = path_actions(g, p);
  json j = pair_head(g, "inverse_dynamics", demo_id, seed, p.nodes.front(), p.nodes.back());
  j["path"] = {{"nodes", p.nodes}, {"edges", p.edges}};
  j["answer"] = actions_to_json(actions);
  j["messages"] = {
      message("user", {image_part(g.node(p.nodes.front()), "first"), image_part(g.node(p.nodes.back()), "second"),
                       text_part("Which actions move the camera from the first view to the second?")}),
      message("assistant", "<action>" + join_actions(actions, "|") + "</action>"),
  };
  return j;
}

std::optional<json> reformulate_forward_dynamics(const ViewGraph& g, std::size_t edge, const DistillConfig& cfg,
                                                 const std::string& demo_id, Rng& rng) {
  const ViewEdge& e = g.edges().at(edge);
  std::vector<NodeId> others;
  for (NodeId n : g.scene_nodes(g.node(e.src).scene_id)) {
    if (n != e.src && n != e.dst) others.push_back(n);
  }
  if (others.empty()) return std::nullopt;
  shuffle(others.begin(), others.end(), rng);
  std::vector<NodeId> candidates{e.dst};
  for (NodeId n : others) {
    if (static_cast<int>(candidates.size()) >= cfg.forward_candidates) break;
    candidates.push_back(n);
  }
  shuffle(candidates.begin(), candidates.end(), rng);
  const auto correct = static_cast<std::size_t>(std::find(candidates.begin(), candidates.end(), e.dst) - candidates.begin());
  json content = {image_part(g.node(e.src), "initial")};
  std::string text = "Actions: " + join_actions(e.actions, "|") + ". Which candidate is the resulting view?";
  json refs = json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    content.push_back(image_part(g.node(candidates[i]), "candidate"));
    refs.push_back(image_ref(g.node(candidates[i])));
    text += fmt::format("\n{}. candidate {}", letter(i), i + 1);
  }
  content.push_back(text_part(text));
  json j = pair_head(g, "forward_dynamics", demo_id, 0, e.src, e.dst);
  j.erase("seed");
  j["edge"] = edge;
  j["actions"] = actions_to_json(e.actions);
  j["candidates"] = candidates;
  j["candidate_images"] = refs;
  j["correct_index"] = correct;
  j["messages"] = {message("user", content), message("assistant", letter(correct))};
  return j;
}

// ---------------------------------------------------------------------------
// Driver

std::string graph_digest(const ViewGraph& g) {
  std::string buf;
  for (const auto& n : g.nodes()) {
    buf += json({n.id, n.scene_id, to_matrix4(n.pose), n.image_hash, n.iteration}).dump();
    buf += '\n';
  }
  for (const auto& e : g.edges()) {
    buf += json({e.src, e.dst, join_actions(e.actions)}).dump();
    buf += '\n';
  }
  return sha256_hex(buf);
}

namespace {

struct SceneDemos {
  std::vector<json> records;
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> warnings;
};

SceneDemos distill_scene(const ViewGraph& g, const std::string& scene, const DistillConfig& cfg) {
  SceneDemos out;
  auto add = [&](json j) {
    ++out.counts[j.at("kind").get<std::string>()];
    out.records.push_back(std::move(j));
  };

  Rng prng(derive_seed(cfg.seed, scene + "/planning"));
  const auto plans = sample_paths(g, scene, cfg.planning_min_length, cfg.planning_max_length, cfg.planning_per_scene,
                                  cfg.planning_balanced, prng);
  if (static_cast<int>(plans.size()) < cfg.planning_per_scene) {
    out.warnings.push_back(fmt::format("{}: {} of {} planning paths", scene, plans.size(), cfg.planning_per_scene));
  }
  for (std::size_t i = 0; i < plans.size(); ++i) {
    for (auto& j : reformulate_planning(g, plans[i], cfg, fmt::format("{}/planning/{}", scene, i))) add(std::move(j));
  }

  Rng vrng(derive_seed(cfg.seed, scene + "/viewdiff"));
  const auto diffs = sample_paths(g, scene, cfg.viewdiff_min_length, cfg.viewdiff_max_length, cfg.viewdiff_per_scene,
                                  cfg.viewdiff_balanced, vrng);
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    const std::string id = fmt::format("{}/viewdiff/{}", scene, i);
    add(reformulate_viewdiff(g, diffs[i].nodes.front(), diffs[i].nodes.back(), diffs[i].length(), id,
                             derive_seed(cfg.seed, id)));
  }

  Rng mrng(derive_seed(cfg.seed, scene + "/mcq"));
  const auto mcqs = sample_paths(g, scene, cfg.viewdiff_min_length, cfg.viewdiff_max_length, cfg.mcq_per_scene,
                                 cfg.viewdiff_balanced, mrng);
  std::size_t mcq_skipped = 0;
  for (std::size_t i = 0; i < mcqs.size(); ++i) {
    const std::string id = fmt::format("{}/mcq/{}", scene, i);
    const std::uint64_t seed = derive_seed(cfg.seed, id);
    Rng rng(seed);
    auto j = reformulate_mcq(g, mcqs[i].nodes.front(), mcqs[i].nodes.back(), mcqs[i].length(), cfg, id, rng);
    if (!j) {
      ++mcq_skipped;
      continue;
    }
    (*j)["seed"] = seed;
    add(std::move(*j));
  }
  if (mcq_skipped > 0) out.warnings.push_back(fmt::format("{}: {} mcq records skipped", scene, mcq_skipped));

  if (cfg.emit_dynamics) {
    Rng drng(derive_seed(cfg.seed, scene + "/dynamics"));
    std::vector<std::size_t> edges;
    for (NodeId n : g.scene_nodes(scene)) {
      for (std::size_t e : g.out_edges(n)) edges.push_back(e);
    }
    std::sort(edges.begin(), edges.end());
    for (int i = 0; i < cfg.dynamics_per_scene && !edges.empty(); ++i) {
      const std::size_t e = edges[uniform_index(drng, edges.size())];
      const GraphPath p{{g.edges()[e].src, g.edges()[e].dst}, {e}};
      const std::string inv_id = fmt::format("{}/inverse/{}", scene, i);
      add(reformulate_inverse_dynamics(g, p, inv_id, derive_seed(cfg.seed, inv_id)));
      const std::string fwd_id = fmt::format("{}/forward/{}", scene, i);
      const std::uint64_t seed = derive_seed(cfg.seed, fwd_id);
      Rng rng(seed);
      if (auto j = reformulate_forward_dynamics(g, e, cfg, fwd_id, rng)) {
        (*j)["seed"] = seed;
        add(std::move(*j));
      }
    }
  }
  return out;
}

}  // namespace

DistillResult run_distill(const ViewGraph& g, const DistillConfig& cfg, unsigned threads) {
  cfg.validate();
  const auto scenes = g.scenes();
  std::vector<SceneDemos> per_scene(scenes.size());
  threads = std::max(1U, threads);
  for (std::size_t begin = 0; begin < scenes.size(); begin += threads) {
    const std::size_t end = std::min(scenes.size(), begin + threads);
    std::vector<std::future<SceneDemos>> jobs;
    for (std::size_t i = begin; i < end; ++i) {
      jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred,
                                [&, i] { return distill_scene(g, scenes[i], cfg); }));
    }
    for (std::size_t i = begin; i < end; ++i) per_scene[i] = jobs[i - begin].get();
  }

  DistillResult r;
  for (auto& s : per_scene) {
    for (auto& j : s.records) r.records.push_back(std::move(j));
    for (const auto& [k, n] : s.counts) r.counts[k] += n;
    for (auto& w : s.warnings) r.warnings.push_back(std::move(w));
  }
  const GraphStats st = g.stats();
  r.manifest = {
      {"config", to_json(cfg)},
      {"seed", cfg.seed},
      {"graph",
       {{"format_version", kGraphFormatVersion},
        {"digest", graph_digest(g)},
        {"scenes", st.scenes},
        {"nodes", st.nodes},
        {"edges", st.edges}}},
      {"counts", r.counts},
      {"records", r.records.size()},
      {"warnings", r.warnings},
  };
  return r;
}

void write_distill(const DistillResult& r, const std::filesystem::path& out_dir) {
  write_jsonl(out_dir / "demos.jsonl", r.records);
  write_file_atomic(out_dir / "manifest.json", r.manifest.dump(2) + "\n");
}

}  // namespace viewplan
