#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "viewplan/image_io.hpp"
#include "viewplan/json_io.hpp"
#include "viewplan/render.hpp"
#include "viewplan/scene.hpp"
#include "viewplan/se3.hpp"

namespace viewplan {

// ---------------------------------------------------------------------------
// Success factors

/// Which camera axis counts as "forward" in world frame. Our cameras look down
/// their +Z axis; MinusZ is the OpenGL-style alternative.
enum class ForwardAxis { PlusZ, MinusZ };

struct FactorOptions {
  StepSizes steps;
  ForwardAxis forward = ForwardAxis::PlusZ;
};

struct FactorVector {
  // geometric distance
  double pos_dist = 0.0;
  double rot_dist = 0.0;
  double unified_dist = 0.0;
  double horiz_dist = 0.0;
  double height_diff = 0.0;
  // visual overlap; null without visibility sets or on an empty denominator
  std::optional<double> vis_init_norm;
  std::optional<double> vis_target_norm;
  std::optional<double> vis_iou;
  // directional; the first three are null when the positions coincide
  std::optional<double> forward_alignment;
  std::optional<double> target_bearing;
  std::optional<double> target_elevation;
  double orientation_agreement = 0.0;
};

inline constexpr std::array<std::string_view, 12> kFactorNames = {
    "pos_dist",          "rot_dist",        "unified_dist",   "horiz_dist",
    "height_diff",       "vis_init_norm",   "vis_target_norm", "vis_iou",
    "forward_alignment", "target_bearing",  "target_elevation", "orientation_agreement",
};

/// Factor by index into kFactorNames.
std::optional<double> factor_value(const FactorVector& f, std::size_t index);
json to_json(const FactorVector& f);

Eigen::Vector3d camera_forward(const Pose& p, ForwardAxis axis = ForwardAxis::PlusZ);

/// Sorted vertex indices, as returned by visible_vertices().
using VertexSet = std::vector<std::uint32_t>;

FactorVector compute_factors(const Pose& init, const Pose& target, const FactorOptions& opt = {},
                             const VertexSet* vis_init = nullptr, const VertexSet* vis_target = nullptr);

// ---------------------------------------------------------------------------
// Rank correlation

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> xs);

/// Spearman's rho as the Pearson correlation of average ranks. Throws on size
/// mismatch or fewer than two samples; nullopt when either input is constant.
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

struct FactorCorrelation {
  std::string factor;
  std::string outcome;
  std::optional<double> rho;
  std::size_t n = 0;  // samples where the factor was defined
};

/// Spearman of every factor against every named outcome column (same length as
/// `factors`). Undefined factor values drop out of that factor's correlation.
std::vector<FactorCorrelation> factor_correlations(const std::vector<FactorVector>& factors,
                                                   const std::map<std::string, std::vector<double>>& outcomes);

// ---------------------------------------------------------------------------
// Rollouts and pairs

/// One pair/instance as seen by the analysis: distances from init to target.
struct PairInfo {
  std::string instance_id;
  std::string kind;        // p2v | v2p | ivp, lower-cased (empty when unknown)
  std::string scene_id;
  Pose init;
  Pose target;
  double d_pos = 0.0;
  double d_rot = 0.0;
  double unified = 0.0;
  std::string difficulty;  // short | long, as tagged in the manifest (lower-cased)
  std::optional<int> correct_index;
};

/// Keyed by instance_id. Difficulty falls back to unified < boundary when untagged.
std::map<std::string, PairInfo> pairs_from_manifest(const std::vector<json>& lines, const StepSizes& steps = {},
                                                    double short_long_boundary = 3.0);

struct EpisodeSummary {
  std::string episode_id;
  std::string instance_id;
  std::string scene_id;
  std::string variant;
  Pose init;
  Pose target;
  bool success = false;
  double reward = 0.0;
  int turns = 0;
  std::string termination;
  std::vector<Pose> poses;                   // [0] = init, [k] = pose after turn k
  std::vector<ActionSequence> turn_actions;  // actions executed in turn k+1
};

/// Groups RolloutLog lines by episode (first-seen order). Throws when an episode
/// lacks its outcome line.
std::vector<EpisodeSummary> episodes_from_rollouts(const std::vector<json>& lines);

// ---------------------------------------------------------------------------
// Success tables

struct ScoredSample {
  std::string instance_id;
  bool success = false;
};

std::vector<ScoredSample> samples_from_episodes(const std::vector<EpisodeSummary>& episodes);
/// Multiple-choice predictions: lines {instance_id, prediction}. Unknown ids throw.
std::vector<ScoredSample> score_choices(const std::vector<json>& predictions,
                                        const std::map<std::string, PairInfo>& pairs);

struct RateCell {
  std::size_t count = 0;
  std::size_t successes = 0;
  [[nodiscard]] std::optional<double> rate() const;
};

struct BinRow {
  double lo = 0.0;
  double hi = 0.0;  // +inf for the open last bin
  RateCell cell;
};

/// Bins are [e0, e1], (e1, e2], ..., (e_last, inf).
struct BinEdges {
  std::vector<double> rotation_deg{0, 30, 60, 90};
  std::vector<double> position_m{0, 0.5, 1, 2};
};

struct SuccessTable {
  RateCell short_split;
  RateCell long_split;
  RateCell all;
  std::vector<BinRow> by_rotation;
  std::vector<BinRow> by_position;
  std::size_t difficulty_mismatches = 0;  // manifest tag disagreeing with unified < 3
};

SuccessTable success_table(const std::vector<ScoredSample>& samples, const std::map<std::string, PairInfo>& pairs,
                           const BinEdges& bins = {}, double short_long_boundary = 3.0);

// ---------------------------------------------------------------------------
// Coverage and turns

struct CoverageCurve {
  std::vector<double> mean;
  std::vector<double> stddev;       // population standard deviation
  std::vector<std::size_t> counts;  // trajectories reaching each turn
  std::size_t excluded_turns = 0;   // dropped by the 1% rule
};

struct CoverageResult {
  CoverageCurve scene;
  CoverageCurve target;
  std::vector<std::vector<double>> per_episode_scene;   // cumulative ratios, before exclusion
  std::vector<std::vector<double>> per_episode_target;  // empty when the target sees nothing
};

struct CoverageOptions {
  CameraIntrinsics intrinsics;
  StepSizes steps;
  double min_count_fraction = 0.01;
  bool check_replay = true;
};

/// Cumulative vertex unions along each episode. Throws when an episode's scene is
/// missing or its logged poses do not replay from its actions.
CoverageResult coverage_curves(const std::vector<EpisodeSummary>& episodes,
                               const std::map<std::string, const Scene*>& scenes, const CoverageOptions& opt = {});

/// Mean/std per turn over the given per-trajectory curves, applying the exclusion rule.
CoverageCurve aggregate_curves(const std::vector<std::vector<double>>& curves, double min_count_fraction = 0.01);

struct TurnBucket {
  int turns = 0;
  std::size_t count = 0;
  std::size_t successes = 0;
  [[nodiscard]] double rate() const { return count ? double(successes) / double(count) : 0.0; }
};

/// Ascending by turn count.
std::vector<TurnBucket> turn_distribution(const std::vector<EpisodeSummary>& episodes);

// ---------------------------------------------------------------------------
// Output

std::string success_table_csv(const SuccessTable& t);  // split,count,successes,rate
std::string bins_csv(const SuccessTable& t);           // axis,lo,hi,count,successes,rate
std::string coverage_csv(const CoverageResult& c);     // turn,scene_mean,scene_std,scene_n,target_mean,...
std::string turn_distribution_csv(const std::vector<TurnBucket>& b);
std::string factors_csv(const std::vector<std::string>& ids, const std::vector<FactorVector>& f);
std::string correlations_csv(const std::vector<FactorCorrelation>& c);

struct PlotSeries {
  std::vector<double> y;
  std::vector<double> band;  // +/- half-width per point, optional
  Rgb color{31, 119, 180};
};
/// Unlabelled line chart over x = 0..n-1 with y in [y_min, y_max].
RgbImage line_plot(const std::vector<PlotSeries>& series, double y_min, double y_max, int width = 480,
                   int height = 320);
RgbImage bar_plot(const std::vector<double>& values, double y_max, int width = 480, int height = 320);

struct AnalysisInputs {
  std::vector<json> rollouts;
  std::vector<json> manifest;
  std::vector<json> predictions;  // {instance_id, prediction} for p2v/v2p
  std::map<std::string, const Scene*> scenes;
  FactorOptions factors;
  BinEdges bins;
  CoverageOptions coverage;
};

/// Writes the CSV tables, PNG plots and summary.json; returns the summary.
json run_analysis(const AnalysisInputs& in, const std::filesystem::path& out_dir);

}  // namespace viewplan
