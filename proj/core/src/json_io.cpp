#include "viewplan/json_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace viewplan {

json pose_to_json(const Pose& p) {
  const PoseVector v = to_vector(p);
  return json(std::vector<double>(v.begin(), v.end()));
}

Pose pose_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("pose must be a JSON array");
  const auto v = j.get<std::vector<double>>();
  if (v.size() == 6) return from_vector(v);
  if (v.size() == 16) return from_matrix4(v);
  throw std::invalid_argument("pose must have 6 or 16 numbers");
}

json actions_to_json(std::span<const Action> seq) { return json(action_names(seq)); }

ActionSequence actions_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("actions must be a JSON array");
  return actions_from_names(j.get<std::vector<std::string>>());
}

std::size_t write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
  return records.size();
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace viewplan
