#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "viewplan/json_io.hpp"
#include "viewplan/random.hpp"
#include "viewplan/view_graph.hpp"

namespace viewplan {

struct DistillConfig {
  int planning_min_length = 3;
  int planning_max_length = 5;
  int planning_per_scene = 20;
  bool planning_balanced = false;
  int oversample = 10;

  int viewdiff_min_length = 2;
  int viewdiff_max_length = 5;
  int viewdiff_per_scene = 15;
  int mcq_per_scene = 15;
  bool viewdiff_balanced = true;
  double mcq_separation = 0.5;  // unified units between any two options
  int mcq_options = 4;

  bool emit_dynamics = false;
  int dynamics_per_scene = 15;
  int forward_candidates = 4;

  std::uint64_t seed = 0;

  void validate() const;
};

json to_json(const DistillConfig& c);
/// Missing keys keep defaults; unknown keys are rejected.
DistillConfig distill_config_from_json(const json& j);

/// v0 --edges[0]--> v1 ... --edges[K-1]--> vK; edges index into ViewGraph::edges().
struct GraphPath {
  std::vector<NodeId> nodes;
  std::vector<std::size_t> edges;
  [[nodiscard]] std::size_t length() const { return edges.size(); }
};

/// Uniform random walks without node repetition: uniform start node, uniform choice
/// among out-edges to unvisited nodes. Balanced mode splits `count` evenly across
/// lengths (remainder to the shortest); unfillable quota is backfilled from the
/// lengths that do exist. Returns fewer paths when the scene cannot supply them.
std::vector<GraphPath> sample_paths(const ViewGraph& g, const std::string& scene, int min_length,
                                    int max_length, int count, bool balanced, Rng& rng);

/// Action list of every edge along the path, concatenated.
ActionSequence path_actions(const ViewGraph& g, const GraphPath& p);

/// Image reference for a node ("images/<hash>.png"), or null when it has none.
json image_ref(const ViewNode& n);

/// `oversample` demonstrations of one path; nullopt-equivalent (empty) when the
/// path does not replay within the dedup tolerance. Throws on length outside [3, 5].
std::vector<json> reformulate_planning(const ViewGraph& g, const GraphPath& p, const DistillConfig& cfg,
                                       const std::string& demo_id);

/// Label = unified view distance between the two nodes' stored poses.
json reformulate_viewdiff(const ViewGraph& g, NodeId a, NodeId b, std::size_t path_length,
                          const std::string& demo_id, std::uint64_t seed);

/// Four options: the true distance plus three from other same-scene node pairs, all
/// pairwise >= cfg.mcq_separation apart. Empty when not enough distinct distances exist.
std::optional<json> reformulate_mcq(const ViewGraph& g, NodeId a, NodeId b, std::size_t path_length,
                                    const DistillConfig& cfg, const std::string& demo_id, Rng& rng);

json reformulate_inverse_dynamics(const ViewGraph& g, const GraphPath& p, const std::string& demo_id,
                                  std::uint64_t seed);
/// Empty when fewer than two candidate views exist.
std::optional<json> reformulate_forward_dynamics(const ViewGraph& g, std::size_t edge, const DistillConfig& cfg,
                                                 const std::string& demo_id, Rng& rng);

struct DistillResult {
  std::vector<json> records;  // scene order, then kind order
  json manifest;
  std::map<std::string, std::size_t> counts;  // per kind
  std::vector<std::string> warnings;
};

/// SHA-256 over the graph's persisted node and edge records.
std::string graph_digest(const ViewGraph& g);

DistillResult run_distill(const ViewGraph& g, const DistillConfig& cfg, unsigned threads = 1);
/// Writes demos.jsonl and manifest.json.
void write_distill(const DistillResult& r, const std::filesystem::path& out_dir);

}  // namespace viewplan
