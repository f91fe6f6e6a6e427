#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "viewplan/json_io.hpp"
#include "viewplan/render.hpp"
#include "viewplan/scene.hpp"
#include "viewplan/se3.hpp"

namespace viewplan::cli {

/// Bad user input (flags, config keys, pose strings): exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// --seed and --config, shared by every subcommand.
struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;

  /// The config file's JSON object ({} without --config). Keys outside `allowed` are a UsageError.
  [[nodiscard]] json config(const std::set<std::string>& allowed) const;
  [[nodiscard]] std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

void add_common(CLI::App* sub, Common& c);

/// Runs `body`, translating core std::invalid_argument into UsageError.
template <typename F>
auto as_usage(const std::string& what, F&& body) {
  try {
    return body();
  } catch (const std::invalid_argument& e) {
    throw UsageError(what + ": " + e.what());
  }
}

CameraIntrinsics intrinsics_from(const json& cfg);
StepSizes steps_from(const json& cfg);

/// "x,y,z,rx,ry,rz" (commas and/or spaces), or 16 row-major matrix entries.
Pose parse_pose_arg(const std::string& text);

/// --scenes flag, else $VIEWPLAN_SCENE_ROOT, else the config's scene_root, else ./scenes.
std::filesystem::path scene_root(const std::string& flag, const json& cfg = {});

/// A PLY path, or a scene id resolved as <root>/<id>.ply.
Scene load_scene_arg(const std::string& arg, const std::filesystem::path& root);

/// Loads <root>/<id>.ply for each id.
std::map<std::string, std::shared_ptr<const Scene>> load_scenes(const std::filesystem::path& root,
                                                                 const std::set<std::string>& ids);

std::vector<json> read_jsonl_files(const std::vector<std::string>& paths);

void register_data_commands(CLI::App& app);
void register_episode_commands(CLI::App& app);
void register_graph_commands(CLI::App& app);

}  // namespace viewplan::cli
