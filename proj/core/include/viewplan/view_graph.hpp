#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "viewplan/actions.hpp"
#include "viewplan/json_io.hpp"
#include "viewplan/render.hpp"
#include "viewplan/scene.hpp"

namespace viewplan {

using NodeId = std::int64_t;

struct ViewNode {
  NodeId id = 0;
  std::string scene_id;
  Pose pose;
  std::string image_hash;
  int iteration = 0;
};

struct ViewEdge {
  NodeId src = 0;
  NodeId dst = 0;
  ActionSequence actions;
};

struct GraphState {
  Pose pose;
  std::string image_hash;
  bool quality_ok = true;
};

/// States plus the action list between consecutive states (actions.size() == states.size() - 1).
struct GraphTrajectory {
  std::string scene_id;
  std::vector<GraphState> states;
  std::vector<ActionSequence> actions;
  int iteration = 0;
  bool snapped = true;
};

struct GraphConfig {
  double dedup_position_m = 0.25;
  double dedup_rotation_deg = 15.0;
  StepSizes steps;
  bool snap = true;
};

struct MergeReport {
  std::size_t nodes_added = 0;
  std::size_t nodes_merged = 0;
  std::size_t states_dropped = 0;
  std::size_t edges_added = 0;
  std::size_t edges_deduped = 0;
  std::size_t self_loops = 0;
  std::size_t edges_rejected = 0;  // replay from the merged source missed the merged destination

  MergeReport& operator+=(const MergeReport& o);
};

struct GraphStats {
  std::size_t scenes = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double avg_nodes_per_scene = 0.0;
  double avg_actions_per_edge = 0.0;
};

/// "Scenes | Nodes | Edges | Avg nodes/scene | Avg actions/edge" row, e.g. "186 | 4067 | 2875 | 21.9 | 1.6".
std::string format_stats_row(const GraphStats& s);

inline constexpr int kGraphFormatVersion = 1;

class ViewGraph {
 public:
  explicit ViewGraph(GraphConfig cfg = {});

  /// Throws std::invalid_argument for malformed trajectories (size mismatch, invalid
  /// poses, or actions that do not replay between consecutive states).
  MergeReport ingest(const GraphTrajectory& traj);

  /// First node of the scene, in insertion order, within both dedup thresholds.
  [[nodiscard]] std::optional<NodeId> find_match(const std::string& scene_id, const Pose& pose) const;
  [[nodiscard]] bool within_dedup(const Pose& a, const Pose& b) const;

  [[nodiscard]] const GraphConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<ViewNode>& nodes() const { return nodes_; }
  [[nodiscard]] const std::vector<ViewEdge>& edges() const { return edges_; }
  [[nodiscard]] const ViewNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] std::vector<std::string> scenes() const;
  [[nodiscard]] const std::vector<NodeId>& scene_nodes(const std::string& scene_id) const;
  /// Indices into edges(), in insertion order.
  [[nodiscard]] const std::vector<std::size_t>& out_edges(NodeId id) const;
  [[nodiscard]] GraphStats stats() const;

  /// nodes.jsonl, edges.jsonl and meta.json under dir (images/ is left alone).
  void persist(const std::filesystem::path& dir) const;
  static ViewGraph load(const std::filesystem::path& dir);

 private:
  NodeId add_node(const std::string& scene, const GraphState& s, int iteration);
  bool add_edge(NodeId src, NodeId dst, ActionSequence actions);

  GraphConfig cfg_;
  std::vector<ViewNode> nodes_;
  std::vector<ViewEdge> edges_;
  std::map<std::string, std::vector<NodeId>> by_scene_;
  std::vector<std::vector<std::size_t>> out_;
  std::set<std::tuple<NodeId, NodeId, std::string>> edge_keys_;
};

std::map<Action, double> action_distribution(const std::vector<ActionSequence>& seqs);
std::map<Action, double> action_distribution(const ViewGraph& g);

/// Groups rollout JSONL lines by episode into trajectories (init pose, then the pose
/// after every turn that executed actions). Needs the outcome line for the init pose.
std::vector<GraphTrajectory> trajectories_from_rollouts(const std::vector<json>& lines, int iteration = 0);

/// Renders every state, fills its hash and quality verdict, and writes
/// images/<hash>.png under images_root when it is non-empty.
void annotate_views(GraphTrajectory& traj, const Scene& scene, const CameraIntrinsics& intr,
                    const std::filesystem::path& images_root = {});

/// Producers submit from any thread; one merger thread applies trajectories in
/// submission order. Readers take immutable snapshots.
class ConcurrentGraphBuilder {
 public:
  explicit ConcurrentGraphBuilder(ViewGraph initial = ViewGraph{});
  ~ConcurrentGraphBuilder();
  ConcurrentGraphBuilder(const ConcurrentGraphBuilder&) = delete;
  ConcurrentGraphBuilder& operator=(const ConcurrentGraphBuilder&) = delete;

  /// Throws std::logic_error after finish().
  void submit(GraphTrajectory traj);
  [[nodiscard]] std::shared_ptr<const ViewGraph> snapshot() const;
  /// Drains the queue, stops the merger and returns the final graph and totals.
  std::pair<ViewGraph, MergeReport> finish();
  /// Trajectories the merger rejected, with the reason.
  [[nodiscard]] std::vector<std::string> errors() const;

 private:
  void run();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<GraphTrajectory> queue_;
  bool closed_ = false;
  ViewGraph graph_;
  std::shared_ptr<const ViewGraph> snapshot_;
  MergeReport totals_;
  std::vector<std::string> errors_;
  std::thread worker_;
};

}  // namespace viewplan
