#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "viewplan/json_io.hpp"
#include "viewplan/planner.hpp"
#include "viewplan/random.hpp"
#include "viewplan/render.hpp"
#include "viewplan/scene.hpp"

namespace viewplan {

/// Frame-offset distribution for trajectory pairs: a weighted mixture of
/// [short_lo, short_hi], [mid_lo, mid_hi] and every other offset.
struct DeltaMixture {
  double w_short = 0.3;
  double w_mid = 0.5;
  double w_other = 0.2;
  int short_lo = 50, short_hi = 99;
  int mid_lo = 100, mid_hi = 300;
};

struct PipelineConfig {
  DeltaMixture delta;
  int min_length = 2;
  int max_length = 10;
  int num_distractors = 3;
  double perturb_ratio = 0.3;
  double p_replace = 0.6;
  double p_remove = 0.2;
  double p_insert = 0.2;
  double same_category_prob = 0.7;
  double pixel_threshold = 0.02;
  int max_distractor_attempts = 20;
  int max_pair_attempts = 20;
  double pair_timeout_s = 30.0;
  std::uint64_t seed = 0;

  // Run-size and bookkeeping knobs.
  int pairs_per_scene = 20;
  double identical_position_m = 1e-6;
  double identical_rotation_deg = 1e-4;
  double short_long_boundary = 3.0;
  bool require_canonical_plan = true;  // re-planning from init must reproduce the stored plan
  bool require_view_quality = true;    // init and target views must pass quality_check
  int budget = 10;
  SuccessThresholds thresholds;
  PlannerConfig planner;
  CameraIntrinsics intrinsics;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

json to_json(const PipelineConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const json& j);

enum class PairSource { Trajectory, Synthetic };
enum class Difficulty { Short, Long };

std::string_view to_string(PairSource s);
std::string_view to_string(Difficulty d);

struct ViewPair {
  std::string pair_id;
  std::string scene_id;
  PairSource source = PairSource::Synthetic;
  int f_init = -1;  // trajectory frame indices; -1 in synthetic mode
  int f_tgt = -1;
  Pose init;
  Pose target;  // committed: execute(init, actions)
  ActionSequence actions;
  double distance = 0.0;  // unified
  Difficulty difficulty = Difficulty::Short;
};

struct PairSample {
  std::optional<ViewPair> pair;
  std::string skip_reason;
  RenderedView init_view;
  RenderedView target_view;
};

struct Trajectory {
  std::vector<Pose> frames;
};

/// A smooth walk through the room at eye height, looking roughly along the
/// direction of travel. Poses are off the rotation grid, as real ones are.
Trajectory procedural_trajectory(const Scene& scene, std::uint64_t seed, std::size_t frames = 600);

/// Draws a frame offset; nullopt when the trajectory is too short for the drawn component.
std::optional<int> sample_delta(const DeltaMixture& mix, Rng& rng, std::size_t frame_count);

/// Plans init -> raw target and applies every per-pair filter.
PairSample make_pair(const Scene& scene, const Pose& init, const Pose& raw_target,
                     const PipelineConfig& cfg);
PairSample sample_trajectory_pair(const Scene& scene, const Trajectory& traj,
                                  const PipelineConfig& cfg, Rng& rng);
PairSample sample_synthetic_pair(const Scene& scene, const PipelineConfig& cfg, Rng& rng);

enum class PerturbOp { Replace, Remove, Insert };
std::string_view to_string(PerturbOp op);

struct Perturbation {
  ActionSequence sequence;
  std::vector<PerturbOp> ops;          // one per perturbed position
  std::vector<std::size_t> positions;  // positions in the input, ascending
};

/// Applies ceil(r * len) operations at distinct random positions.
Perturbation perturb_sequence(std::span<const Action> seq, const PipelineConfig& cfg, Rng& rng);

struct Option {
  ActionSequence actions;
  Pose pose;
  RenderedView view;
};

struct DistractorResult {
  std::vector<Option> options;  // ground truth first
  std::string failure;          // non-empty when the pair must be dropped
  int attempts = 0;
  [[nodiscard]] bool ok() const { return failure.empty(); }
};

DistractorResult gen_distractors(const ViewPair& pair, const RenderedView& target_view,
                                 const Scene& scene, const PipelineConfig& cfg, Rng& rng);

enum class TaskKind { P2V, V2P, IVP };
std::string_view to_string(TaskKind k);

/// Image references for one pair (relative paths plus RGB content hashes).
struct ImageRef {
  std::string path;
  std::string sha256;
};
struct PairImages {
  ImageRef init;
  ImageRef topdown;
  ImageRef target;
  std::vector<ImageRef> options;  // aligned with DistractorResult::options
};

struct TaskInstance {
  TaskKind kind = TaskKind::IVP;
  std::string instance_id;
  ViewPair pair;
  PairImages images;
  std::vector<ActionSequence> option_actions;  // shuffled; P2V/V2P
  std::vector<ImageRef> option_images;         // shuffled; P2V/V2P
  int correct_index = -1;
  int budget = 10;
  SuccessThresholds thresholds;
  StepSizes steps;
  std::string partition;  // train | dev | test | unsplit
  std::string subset;     // 5K | 50K
  std::uint64_t seed = 0;
};

json to_json(const TaskInstance& t);

/// One P2V, one V2P and one IVP instance; option orders are shuffled independently.
/// `option_actions` and `images.options` list the ground truth first.
std::array<TaskInstance, 3> build_instances(const ViewPair& pair,
                                            const std::vector<ActionSequence>& option_actions,
                                            const PairImages& images, const PipelineConfig& cfg,
                                            Rng& rng);

struct DatasetSplit {
  std::map<std::string, std::string> scene_partition;  // scene -> train|dev|test
  std::map<std::string, std::string> pair_subset;      // pair -> 5K|50K
};

/// 8:1:1 scene partition and a per-scene 1:10 subset split. Needs >= 10 scenes.
DatasetSplit split_dataset(const std::map<std::string, std::vector<std::string>>& pairs_by_scene,
                           std::uint64_t seed);

/// Keeps scenes whose verdict is "good". Unknown scenes are dropped with a
/// warning; a missing verdict file passes everything.
std::vector<std::string> filter_scenes(const std::vector<std::string>& scene_ids,
                                       const std::filesystem::path& verdict_file);

struct SceneInput {
  Scene scene;
  std::optional<Trajectory> trajectory;  // synthetic pairs when absent
};

struct PipelineStats {
  std::size_t pairs = 0;
  std::size_t instances = 0;
  std::map<std::string, std::size_t> skips;
  std::vector<double> distances;
};

struct PipelineResult {
  std::vector<json> manifest;
  PipelineStats stats;
};

/// Full construction run. Images are written under out_dir/images when out_dir
/// is non-empty; the manifest always carries their relative paths and hashes.
PipelineResult run_pipeline(const std::vector<SceneInput>& scenes, const PipelineConfig& cfg,
                            const std::filesystem::path& out_dir = {}, unsigned threads = 1);

}  // namespace viewplan
