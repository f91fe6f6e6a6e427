#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewplan/actions.hpp"
#include "viewplan/se3.hpp"

namespace viewplan {

using nlohmann::json;

/// Pose as the 6-vector [tx, ty, tz, rx, ry, rz] (degrees).
json pose_to_json(const Pose& p);
/// Accepts a 6-vector or a 16-element row-major matrix.
Pose pose_from_json(const json& j);

json actions_to_json(std::span<const Action> seq);
ActionSequence actions_from_json(const json& j);

/// One compact JSON document per line. Returns the number of records.
std::size_t write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace viewplan
