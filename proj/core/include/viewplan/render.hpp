#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "viewplan/scene.hpp"
#include "viewplan/se3.hpp"

namespace viewplan {

struct CameraIntrinsics {
  int width = 512;
  int height = 512;
  double vfov_deg = 60.0;

  [[nodiscard]] bool is_valid() const {
    return width >= 16 && height >= 16 && vfov_deg >= 10.0 && vfov_deg <= 170.0;
  }
  /// Focal length in pixels; pixels are square.
  [[nodiscard]] double focal() const;
  [[nodiscard]] double cx() const { return 0.5 * width; }
  [[nodiscard]] double cy() const { return 0.5 * height; }
  [[nodiscard]] double hfov_deg() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

struct RenderOptions {
  int splat_radius = 2;        // pixels; the footprint is the integer disk dx^2 + dy^2 <= r^2
  double near_plane = 1e-3;    // meters; points at or closer than this are culled
  double visibility_tolerance = 0.01;  // relative depth slack for visible_vertices
};

/// Row-major framebuffer. `winner` holds the vertex index that wrote each
/// pixel (-1 where void).
struct RenderedView {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // width * height * 3
  std::vector<double> depth;      // +inf where void
  std::vector<std::uint8_t> void_mask;
  std::vector<std::int32_t> winner;

  [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  [[nodiscard]] double void_fraction() const;
  [[nodiscard]] static RenderedView blank(int width, int height);
};

/// Pinhole projection of a world point. Empty when the point is behind the
/// near plane or its center pixel falls outside the image.
struct Projection {
  int px = 0;
  int py = 0;
  double depth = 0.0;  // camera-frame z
};
std::optional<Projection> project(const Pose& camera, const CameraIntrinsics& intr,
                                  const Eigen::Vector3d& world, const RenderOptions& opt = {});

/// Point-splat rasterizer: nearest depth wins each pixel; equal depths go to
/// the lower vertex index.
RenderedView render_view(const Scene& scene, const Pose& camera, const CameraIntrinsics& intr = {},
                         const RenderOptions& opt = {});

/// Looks straight down (camera +Z = world -Z, screen-up = world +Y) from above
/// the bounding-box center, high enough that the horizontal extent fits.
Pose topdown_pose(const Scene& scene, const CameraIntrinsics& intr = {}, double margin = 1.1);

/// Sorted indices of vertices that project in-frame and lie within the relative
/// depth tolerance of the depth buffer at their pixel.
std::vector<std::uint32_t> visible_vertices(const Scene& scene, const Pose& camera,
                                            const CameraIntrinsics& intr = {},
                                            const RenderOptions& opt = {});
/// Same, reusing an existing render of that camera.
std::vector<std::uint32_t> visible_vertices(const Scene& scene, const Pose& camera,
                                            const CameraIntrinsics& intr, const RenderedView& view,
                                            const RenderOptions& opt = {});

struct QualityVerdict {
  bool pass = true;
  std::string reason;  // "void" or "uniform" when rejected
  double void_fraction = 0.0;
  double gray_std = 0.0;
};

inline constexpr double kMaxVoidFraction = 0.7;
inline constexpr double kMinGrayStd = 10.0;

/// Rejects mostly-empty views first, then near-uniform ones. Grayscale is the
/// unweighted RGB mean; the deviation is taken over every pixel.
QualityVerdict quality_check(const RenderedView& view);

/// Mean absolute channel difference scaled to [0, 1].
double pixel_diff(const RenderedView& a, const RenderedView& b);

}  // namespace viewplan
