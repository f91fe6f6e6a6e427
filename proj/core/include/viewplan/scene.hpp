#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace viewplan {

using Rgb = std::array<std::uint8_t, 3>;

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  [[nodiscard]] Eigen::Vector3d center() const { return 0.5 * (min + max); }
  [[nodiscard]] Eigen::Vector3d extent() const { return max - min; }
  [[nodiscard]] bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Immutable colored point cloud. Construction validates it (non-empty, finite).
class Scene {
 public:
  Scene(std::string id, std::vector<Eigen::Vector3d> positions, std::vector<Rgb> colors);

  [[nodiscard]] const std::string& id() const { return id_; }
  [[nodiscard]] std::size_t size() const { return positions_.size(); }
  [[nodiscard]] const std::vector<Eigen::Vector3d>& positions() const { return positions_; }
  [[nodiscard]] const std::vector<Rgb>& colors() const { return colors_; }
  [[nodiscard]] const Aabb& bounds() const { return bounds_; }

  /// Same points shifted by `offset`.
  [[nodiscard]] Scene translated(const Eigen::Vector3d& offset) const;

 private:
  std::string id_;
  std::vector<Eigen::Vector3d> positions_;
  std::vector<Rgb> colors_;
  Aabb bounds_;
};

class PlyError : public std::runtime_error {
 public:
  enum class Kind { Io, MalformedHeader, MissingColor, MissingPosition, Truncated, BadValue };

  PlyError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Reads ASCII or binary little-endian PLY. The vertex element needs
/// x/y/z and red/green/blue; other elements and properties are skipped.
/// The scene id defaults to the file stem.
Scene load_scene(const std::filesystem::path& path, std::string scene_id = {});

/// Binary little-endian PLY with double positions and uchar colors, so a
/// write followed by load_scene is bit-exact.
void write_scene(const Scene& scene, const std::filesystem::path& path);

struct ProceduralSpec {
  double size_x = 6.0;  // room extents in meters; the room spans [0, size] on each axis
  double size_y = 5.0;
  double height = 2.6;
  int box_count = 4;
  std::size_t vertex_count = 60000;
};

/// A ceiling-less room (floor plus four walls) with colored boxes standing on
/// the floor. Surfaces carry a checker texture so views are not flat-shaded.
Scene procedural_scene(std::uint64_t seed, const ProceduralSpec& spec = {}, std::string scene_id = {});

}  // namespace viewplan
