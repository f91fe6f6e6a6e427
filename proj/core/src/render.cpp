#include "viewplan/render.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace viewplan {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

double CameraIntrinsics::focal() const { return 0.5 * height / std::tan(0.5 * vfov_deg * kDegToRad); }

double CameraIntrinsics::hfov_deg() const { return 2.0 * std::atan(0.5 * width / focal()) / kDegToRad; }

double RenderedView::void_fraction() const {
  if (void_mask.empty()) return 0.0;
  std::size_t n = 0;
  for (auto v : void_mask) n += v;
  return static_cast<double>(n) / static_cast<double>(void_mask.size());
}

RenderedView RenderedView::blank(int width, int height) {
  RenderedView v;
  v.width = width;
  v.height = height;
  const auto n = v.pixel_count();
  v.rgb.assign(n * 3, 0);
  v.depth.assign(n, std::numeric_limits<double>::infinity());
  v.void_mask.assign(n, 1);
  v.winner.assign(n, -1);
  return v;
}

std::optional<Projection> project(const Pose& camera, const CameraIntrinsics& intr,
                                  const Eigen::Vector3d& world, const RenderOptions& opt) {
  const Eigen::Vector3d c = camera.rotation.transpose() * (world - camera.position);
  if (!(c.z() > opt.near_plane)) return std::nullopt;
  const double f = intr.focal();
  const double u = f * c.x() / c.z() + intr.cx();
  const double v = f * c.y() / c.z() + intr.cy();
  if (!(u >= 0.0 && u < intr.width && v >= 0.0 && v < intr.height)) return std::nullopt;
  return Projection{static_cast<int>(u), static_cast<int>(v), c.z()};
}

RenderedView render_view(const Scene& scene, const Pose& camera, const CameraIntrinsics& intr,
                         const RenderOptions& opt) {
  if (!intr.is_valid()) throw std::invalid_argument("render_view: invalid intrinsics");
  RenderedView view = RenderedView::blank(intr.width, intr.height);
  const int r = opt.splat_radius;
  const auto& pts = scene.positions();
  const auto& cols = scene.colors();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto proj = project(camera, intr, pts[i], opt);
    if (!proj) continue;
    for (int dy = -r; dy <= r; ++dy) {
      const int y = proj->py + dy;
      if (y < 0 || y >= intr.height) continue;
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy > r * r) continue;
        const int x = proj->px + dx;
        if (x < 0 || x >= intr.width) continue;
        const auto k = static_cast<std::size_t>(y) * intr.width + x;
        // Strict comparison: vertices are visited in index order, so ties keep the lower index.
        if (proj->depth < view.depth[k]) {
          view.depth[k] = proj->depth;
          view.winner[k] = static_cast<std::int32_t>(i);
        }
      }
    }
  }
  for (std::size_t k = 0; k < view.pixel_count(); ++k) {
    if (view.winner[k] < 0) continue;
    view.void_mask[k] = 0;
    const Rgb& c = cols[static_cast<std::size_t>(view.winner[k])];
    view.rgb[3 * k] = c[0];
    view.rgb[3 * k + 1] = c[1];
    view.rgb[3 * k + 2] = c[2];
  }
  return view;
}

Pose topdown_pose(const Scene& scene, const CameraIntrinsics& intr, double margin) {
  const Aabb& box = scene.bounds();
  const Eigen::Vector3d ext = box.extent();
  const double half_diag = 0.5 * std::hypot(ext.x(), ext.y());
  const double half_fov = 0.5 * std::min(intr.vfov_deg, intr.hfov_deg()) * kDegToRad;
  // Keep a minimum standoff so a flat or point-like scene still gets a usable view.
  const double height = std::max(margin * half_diag / std::tan(half_fov), 0.5);
  const Eigen::Vector3d c = box.center();
  return {Eigen::Vector3d(c.x(), c.y(), box.max.z() + height), axis_rotation(0, 180.0)};
}

std::vector<std::uint32_t> visible_vertices(const Scene& scene, const Pose& camera,
                                            const CameraIntrinsics& intr, const RenderedView& view,
                                            const RenderOptions& opt) {
  if (view.width != intr.width || view.height != intr.height) {
    throw std::invalid_argument("visible_vertices: view does not match intrinsics");
  }
  std::vector<std::uint32_t> out;
  const auto& pts = scene.positions();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto proj = project(camera, intr, pts[i], opt);
    if (!proj) continue;
    const double buf = view.depth[static_cast<std::size_t>(proj->py) * intr.width + proj->px];
    if (proj->depth <= buf * (1.0 + opt.visibility_tolerance)) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

std::vector<std::uint32_t> visible_vertices(const Scene& scene, const Pose& camera,
                                            const CameraIntrinsics& intr, const RenderOptions& opt) {
  return visible_vertices(scene, camera, intr, render_view(scene, camera, intr, opt), opt);
}

QualityVerdict quality_check(const RenderedView& view) {
  QualityVerdict q;
  q.void_fraction = view.void_fraction();
  const std::size_t n = view.pixel_count();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double g = (view.rgb[3 * k] + view.rgb[3 * k + 1] + view.rgb[3 * k + 2]) / 3.0;
    sum += g;
    sum_sq += g * g;
  }
  if (n > 0) {
    const double mean = sum / static_cast<double>(n);
    q.gray_std = std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean));
  }
  if (q.void_fraction > kMaxVoidFraction) {
    q.pass = false;
    q.reason = "void";
  } else if (q.gray_std < kMinGrayStd) {
    q.pass = false;
    q.reason = "uniform";
  }
  return q;
}

double pixel_diff(const RenderedView& a, const RenderedView& b) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size()) {
    throw std::invalid_argument("pixel_diff: dimension mismatch");
  }
  if (a.rgb.empty()) return 0.0;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    total += static_cast<std::uint64_t>(std::abs(int{a.rgb[i]} - int{b.rgb[i]}));
  }
  return static_cast<double>(total) / (255.0 * static_cast<double>(a.rgb.size()));
}

}  // namespace viewplan
