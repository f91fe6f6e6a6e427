#include "common.hpp"

#include <cstdlib>
#include <regex>

#include <fmt/format.h>

namespace viewplan::cli {

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed (overrides the config's seed)");
  sub->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
}

json Common::config(const std::set<std::string>& allowed) const {
  if (config_path.empty()) return json::object();
  json j;
  try {
    j = json::parse(read_file(config_path));
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("config {}: {}", config_path, e.what()));
  }
  if (!j.is_object()) throw UsageError("config " + config_path + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw UsageError(fmt::format("config {}: unknown key '{}'", config_path, k));
  }
  return j;
}

CameraIntrinsics intrinsics_from(const json& cfg) {
  CameraIntrinsics intr;
  if (!cfg.contains("intrinsics")) return intr;
  const json& j = cfg["intrinsics"];
  for (const auto& [k, _] : j.items()) {
    if (k != "width" && k != "height" && k != "vfov_deg") throw UsageError("unknown intrinsics key '" + k + "'");
  }
  intr.width = j.value("width", intr.width);
  intr.height = j.value("height", intr.height);
  intr.vfov_deg = j.value("vfov_deg", intr.vfov_deg);
  if (!intr.is_valid()) throw UsageError("invalid intrinsics");
  return intr;
}

StepSizes steps_from(const json& cfg) {
  StepSizes s;
  if (!cfg.contains("steps")) return s;
  s.translation = cfg["steps"].value("translation", s.translation);
  s.rotation_deg = cfg["steps"].value("rotation_deg", s.rotation_deg);
  if (!s.is_valid()) throw UsageError("invalid step sizes");
  return s;
}

Pose parse_pose_arg(const std::string& text) {
  static const std::regex sep("[,\\s]+");
  json nums = json::array();
  for (std::sregex_token_iterator it(text.begin(), text.end(), sep, -1), end; it != end; ++it) {
    const std::string tok = *it;
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(v)) throw UsageError("bad number '" + tok + "' in pose");
    nums.push_back(v);
  }
  if (nums.size() != 6 && nums.size() != 16) {
    throw UsageError(fmt::format("pose needs 6 or 16 numbers, got {}", nums.size()));
  }
  return as_usage("pose", [&] { return pose_from_json(nums); });
}

std::filesystem::path scene_root(const std::string& flag, const json& cfg) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("VIEWPLAN_SCENE_ROOT"); env && *env) return env;
  if (cfg.contains("scene_root")) return cfg["scene_root"].get<std::string>();
  return "scenes";
}

Scene load_scene_arg(const std::string& arg, const std::filesystem::path& root) {
  if (std::filesystem::is_regular_file(arg)) return load_scene(arg);
  const auto path = root / (arg + ".ply");
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError(fmt::format("scene '{}' is neither a file nor {}", arg, path.string()));
  }
  return load_scene(path, arg);
}

std::map<std::string, std::shared_ptr<const Scene>> load_scenes(const std::filesystem::path& root,
                                                                 const std::set<std::string>& ids) {
  std::map<std::string, std::shared_ptr<const Scene>> out;
  for (const auto& id : ids) {
    const auto path = root / (id + ".ply");
    if (!std::filesystem::is_regular_file(path)) {
      throw std::runtime_error(fmt::format("scene '{}' not found at {}", id, path.string()));
    }
    out.emplace(id, std::make_shared<const Scene>(load_scene(path, id)));
  }
  return out;
}

std::vector<json> read_jsonl_files(const std::vector<std::string>& paths) {
  std::vector<json> out;
  for (const auto& p : paths) {
    auto lines = read_jsonl(p);
    out.insert(out.end(), std::make_move_iterator(lines.begin()), std::make_move_iterator(lines.end()));
  }
  return out;
}

}  // namespace viewplan::cli
