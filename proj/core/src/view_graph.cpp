#include "viewplan/view_graph.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "viewplan/image_io.hpp"

namespace viewplan {

MergeReport& MergeReport::operator+=(const MergeReport& o) {
  nodes_added += o.nodes_added;
  nodes_merged += o.nodes_merged;
  states_dropped += o.states_dropped;
  edges_added += o.edges_added;
  edges_deduped += o.edges_deduped;
  self_loops += o.self_loops;
  edges_rejected += o.edges_rejected;
  return *this;
}

std::string format_stats_row(const GraphStats& s) {
  return fmt::format("{} | {} | {} | {:.1f} | {:.1f}", s.scenes, s.nodes, s.edges, s.avg_nodes_per_scene,
                     s.avg_actions_per_edge);
}

ViewGraph::ViewGraph(GraphConfig cfg) : cfg_(cfg) {
  if (!(cfg_.dedup_position_m > 0) || !(cfg_.dedup_rotation_deg > 0) || !cfg_.steps.is_valid()) {
    throw std::invalid_argument("graph thresholds and step sizes must be positive");
  }
}

bool ViewGraph::within_dedup(const Pose& a, const Pose& b) const {
  const ViewDistance d = view_distance(a, b, cfg_.steps);
  return d.position < cfg_.dedup_position_m && d.rotation_deg < cfg_.dedup_rotation_deg;
}

std::optional<NodeId> ViewGraph::find_match(const std::string& scene_id, const Pose& pose) const {
  const auto it = by_scene_.find(scene_id);
  if (it == by_scene_.end()) return std::nullopt;
  for (NodeId id : it->second) {
    if (within_dedup(node(id).pose, pose)) return id;
  }
  return std::nullopt;
}

NodeId ViewGraph::add_node(const std::string& scene, const GraphState& s, int iteration) {
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back({id, scene, s.pose, s.image_hash, iteration});
  by_scene_[scene].push_back(id);
  out_.emplace_back();
  return id;
}

bool ViewGraph::add_edge(NodeId src, NodeId dst, ActionSequence actions) {
  if (!edge_keys_.emplace(src, dst, join_actions(actions)).second) return false;
  out_[static_cast<std::size_t>(src)].push_back(edges_.size());
  edges_.push_back({src, dst, std::move(actions)});
  return true;
}

MergeReport ViewGraph::ingest(const GraphTrajectory& traj) {
  if (traj.scene_id.empty()) throw std::invalid_argument("trajectory has no scene id");
  if (traj.states.empty()) return {};
  if (traj.actions.size() + 1 != traj.states.size()) {
    throw std::invalid_argument("trajectory needs exactly one action list between consecutive states");
  }
  if (traj.snapped != cfg_.snap) throw std::invalid_argument("trajectory protocol does not match the graph's");
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    if (!traj.states[i].pose.is_valid(1e-6)) throw std::invalid_argument(fmt::format("state {} has an invalid pose", i));
    if (i == 0) continue;
    const Pose replayed = execute(traj.states[i - 1].pose, traj.actions[i - 1], cfg_.steps, cfg_.snap);
    const ViewDistance d = view_distance(replayed, traj.states[i].pose, cfg_.steps);
    if (d.position > 1e-6 || d.rotation_deg > 1e-6) {
      throw std::invalid_argument(fmt::format("actions {} -> {} do not replay to the logged pose", i - 1, i));
    }
  }

  MergeReport rep;
  std::optional<NodeId> prev;
  ActionSequence pending;
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    if (i > 0) pending.insert(pending.end(), traj.actions[i - 1].begin(), traj.actions[i - 1].end());
    const GraphState& s = traj.states[i];
    if (!s.quality_ok) {
      // Bridged: the pending actions carry over to the next surviving state.
      ++rep.states_dropped;
      continue;
    }
    NodeId id = 0;
    if (auto m = find_match(traj.scene_id, s.pose)) {
      id = *m;
      ++rep.nodes_merged;
    } else {
      id = add_node(traj.scene_id, s, traj.iteration);
      ++rep.nodes_added;
    }
    if (prev) {
      if (*prev == id) {
        ++rep.self_loops;
      } else if (!within_dedup(execute(node(*prev).pose, pending, cfg_.steps, cfg_.snap), node(id).pose)) {
        ++rep.edges_rejected;
      } else if (add_edge(*prev, id, pending)) {
        ++rep.edges_added;
      } else {
        ++rep.edges_deduped;
      }
    }
    prev = id;
    pending.clear();
  }
  return rep;
}

std::vector<std::string> ViewGraph::scenes() const {
  std::vector<std::string> out;
  for (const auto& [scene, _] : by_scene_) out.push_back(scene);
  return out;
}

const std::vector<NodeId>& ViewGraph::scene_nodes(const std::string& scene_id) const {
  static const std::vector<NodeId> kEmpty;
  const auto it = by_scene_.find(scene_id);
  return it == by_scene_.end() ? kEmpty : it->second;
}

const std::vector<std::size_t>& ViewGraph::out_edges(NodeId id) const { return out_.at(static_cast<std::size_t>(id)); }

GraphStats ViewGraph::stats() const {
  GraphStats s;
  s.scenes = by_scene_.size();
  s.nodes = nodes_.size();
  s.edges = edges_.size();
  if (s.scenes > 0) s.avg_nodes_per_scene = static_cast<double>(s.nodes) / static_cast<double>(s.scenes);
  std::size_t actions = 0;
  for (const auto& e : edges_) actions += e.actions.size();
  if (s.edges > 0) s.avg_actions_per_edge = static_cast<double>(actions) / static_cast<double>(s.edges);
  return s;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json node_to_json(const ViewNode& n) {
  const Eigen::Matrix3d& r = n.pose.rotation;
  return {{"id", n.id},
          {"scene_id", n.scene_id},
          {"position", {n.pose.position.x(), n.pose.position.y(), n.pose.position.z()}},
          {"rotation", {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}},
          {"image", n.image_hash},
          {"iteration", n.iteration}};
}

// Raw matrix entries, not re-orthonormalized, so a reload is bit-exact.
Pose pose_from_raw(const json& pos, const json& rot) {
  const auto p = pos.get<std::vector<double>>();
  const auto r = rot.get<std::vector<double>>();
  if (p.size() != 3 || r.size() != 9) throw std::invalid_argument("bad pose arrays");
  Eigen::Matrix3d m;
  m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
  Pose pose(Eigen::Vector3d(p[0], p[1], p[2]), m);
  if (!pose.is_valid(1e-6)) throw std::invalid_argument("invalid pose");
  return pose;
}

}  // namespace

void ViewGraph::persist(const std::filesystem::path& dir) const {
  std::vector<json> nodes, edges;
  for (const auto& n : nodes_) nodes.push_back(node_to_json(n));
  for (const auto& e : edges_) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"actions", actions_to_json(e.actions)}});
  write_jsonl(dir / "nodes.jsonl", nodes);
  write_jsonl(dir / "edges.jsonl", edges);
  const GraphStats s = stats();
  const json meta = {
      {"format_version", kGraphFormatVersion},
      {"dedup", {{"position_m", cfg_.dedup_position_m}, {"rotation_deg", cfg_.dedup_rotation_deg}}},
      {"steps", {{"translation", cfg_.steps.translation}, {"rotation_deg", cfg_.steps.rotation_deg}}},
      {"snap", cfg_.snap},
      {"stats",
       {{"scenes", s.scenes},
        {"nodes", s.nodes},
        {"edges", s.edges},
        {"avg_nodes_per_scene", s.avg_nodes_per_scene},
        {"avg_actions_per_edge", s.avg_actions_per_edge}}},
  };
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

ViewGraph ViewGraph::load(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) {
    if (std::filesystem::exists(dir / "nodes.jsonl") || std::filesystem::exists(dir / "edges.jsonl")) {
      throw std::runtime_error("graph store " + dir.string() + " has records but no meta.json");
    }
    return ViewGraph{};
  }
  const json meta = json::parse(read_file(meta_path));
  const int version = meta.value("format_version", -1);
  if (version != kGraphFormatVersion) {
    throw std::runtime_error(fmt::format("unsupported graph format version {} (expected {})", version,
                                         kGraphFormatVersion));
  }
  GraphConfig cfg;
  cfg.dedup_position_m = meta.at("dedup").at("position_m").get<double>();
  cfg.dedup_rotation_deg = meta.at("dedup").at("rotation_deg").get<double>();
  cfg.steps.translation = meta.at("steps").at("translation").get<double>();
  cfg.steps.rotation_deg = meta.at("steps").at("rotation_deg").get<double>();
  cfg.snap = meta.at("snap").get<bool>();

  ViewGraph g(cfg);
  auto records = [&](const char* name) {
    const auto path = dir / name;
    return std::filesystem::exists(path) ? read_jsonl(path) : std::vector<json>{};
  };
  const auto nodes = records("nodes.jsonl");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    try {
      const json& j = nodes[i];
      if (j.at("id").get<NodeId>() != static_cast<NodeId>(i)) throw std::invalid_argument("ids must be dense and ordered");
      GraphState s{pose_from_raw(j.at("position"), j.at("rotation")), j.at("image").get<std::string>(), true};
      g.add_node(j.at("scene_id").get<std::string>(), s, j.at("iteration").get<int>());
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("nodes.jsonl record {}: {}", i + 1, e.what()));
    }
  }
  const auto edges = records("edges.jsonl");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    try {
      const json& j = edges[i];
      const auto src = j.at("src").get<NodeId>(), dst = j.at("dst").get<NodeId>();
      const auto n = static_cast<NodeId>(g.nodes_.size());
      if (src < 0 || src >= n || dst < 0 || dst >= n) throw std::invalid_argument("edge endpoint does not exist");
      if (g.node(src).scene_id != g.node(dst).scene_id) throw std::invalid_argument("cross-scene edge");
      ActionSequence actions = actions_from_json(j.at("actions"));
      if (actions.empty()) throw std::invalid_argument("empty action list");
      if (!g.add_edge(src, dst, std::move(actions))) throw std::invalid_argument("duplicate edge");
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("edges.jsonl record {}: {}", i + 1, e.what()));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

std::map<Action, double> action_distribution(const std::vector<ActionSequence>& seqs) {
  std::map<Action, double> out;
  std::size_t total = 0;
  for (const auto& s : seqs) {
    for (Action a : s) out[a] += 1.0;
    total += s.size();
  }
  for (auto& [_, v] : out) v /= static_cast<double>(total);
  return out;
}

std::map<Action, double> action_distribution(const ViewGraph& g) {
  std::vector<ActionSequence> seqs;
  seqs.reserve(g.edges().size());
  for (const auto& e : g.edges()) seqs.push_back(e.actions);
  return action_distribution(seqs);
}

std::vector<GraphTrajectory> trajectories_from_rollouts(const std::vector<json>& lines, int iteration) {
  struct Episode {
    std::vector<const json*> turns;
    const json* outcome = nullptr;
  };
  std::vector<std::string> order;
  std::map<std::string, Episode> eps;
  for (const json& j : lines) {
    const auto id = j.at("episode_id").get<std::string>();
    if (!eps.count(id)) order.push_back(id);
    if (eps[id].outcome) throw std::invalid_argument("episode id " + id + " appears in more than one episode");
    if (j.at("type") == "outcome") {
      eps[id].outcome = &j;
    } else {
      eps[id].turns.push_back(&j);
    }
  }
  std::vector<GraphTrajectory> out;
  for (const auto& id : order) {
    Episode& ep = eps[id];
    if (!ep.outcome) throw std::invalid_argument("episode " + id + " has no outcome line");
    std::sort(ep.turns.begin(), ep.turns.end(),
              [](const json* a, const json* b) { return a->at("turn").get<int>() < b->at("turn").get<int>(); });
    GraphTrajectory t;
    t.scene_id = ep.outcome->at("scene_id").get<std::string>();
    t.iteration = iteration;
    t.snapped = ep.outcome->value("variant", std::string("default")) != "no-snap";
    t.states.push_back({pose_from_json(ep.outcome->at("init_pose")), {}, true});
    for (const json* turn : ep.turns) {
      ActionSequence a = actions_from_json(turn->at("actions"));
      if (a.empty()) continue;
      t.actions.push_back(std::move(a));
      t.states.push_back({pose_from_json(turn->at("pose")), {}, true});
    }
    out.push_back(std::move(t));
  }
  return out;
}

void annotate_views(GraphTrajectory& traj, const Scene& scene, const CameraIntrinsics& intr,
                    const std::filesystem::path& images_root) {
  if (scene.id() != traj.scene_id) {
    throw std::invalid_argument("scene mismatch: trajectory " + traj.scene_id + " vs scene " + scene.id());
  }
  for (auto& s : traj.states) {
    const RenderedView v = render_view(scene, s.pose, intr);
    s.image_hash = sha256_hex(v.rgb);
    s.quality_ok = quality_check(v).pass;
    if (!images_root.empty()) {
      const auto path = images_root / (s.image_hash + ".png");
      if (!std::filesystem::exists(path)) {
        std::filesystem::create_directories(images_root);
        write_png(path, to_image(v));
      }
    }
  }
}

// ---------------------------------------------------------------------------

ConcurrentGraphBuilder::ConcurrentGraphBuilder(ViewGraph initial)
    : graph_(std::move(initial)), snapshot_(std::make_shared<const ViewGraph>(graph_)) {
  worker_ = std::thread([this] { run(); });
}

ConcurrentGraphBuilder::~ConcurrentGraphBuilder() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void ConcurrentGraphBuilder::submit(GraphTrajectory traj) {
  {
    std::lock_guard lock(mu_);
    if (closed_) throw std::logic_error("submit after finish");
    queue_.push_back(std::move(traj));
  }
  cv_.notify_one();
}

std::shared_ptr<const ViewGraph> ConcurrentGraphBuilder::snapshot() const {
  std::lock_guard lock(mu_);
  return snapshot_;
}

std::vector<std::string> ConcurrentGraphBuilder::errors() const {
  std::lock_guard lock(mu_);
  return errors_;
}

void ConcurrentGraphBuilder::run() {
  for (;;) {
    GraphTrajectory traj;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return closed_ || !queue_.empty(); });
      if (queue_.empty()) return;
      traj = std::move(queue_.front());
      queue_.pop_front();
    }
    // Only this thread touches graph_, so the merge runs unlocked.
    MergeReport rep;
    std::string error;
    try {
      rep = graph_.ingest(traj);
    } catch (const std::exception& e) {
      error = "trajectory in " + traj.scene_id + ": " + e.what();
      spdlog::warn("graph merge rejected {}", error);
    }
    auto snap = std::make_shared<const ViewGraph>(graph_);
    std::lock_guard lock(mu_);
    totals_ += rep;
    if (!error.empty()) errors_.push_back(std::move(error));
    snapshot_ = std::move(snap);
  }
}

std::pair<ViewGraph, MergeReport> ConcurrentGraphBuilder::finish() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  return {graph_, totals_};
}

}  // namespace viewplan
