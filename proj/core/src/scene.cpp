#include "viewplan/scene.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "viewplan/random.hpp"

namespace viewplan {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

Scene::Scene(std::string id, std::vector<Eigen::Vector3d> positions, std::vector<Rgb> colors)
    : id_(std::move(id)), positions_(std::move(positions)), colors_(std::move(colors)) {
  if (positions_.empty()) throw std::invalid_argument("Scene: no vertices");
  if (positions_.size() != colors_.size()) throw std::invalid_argument("Scene: color count mismatch");
  bounds_.min = bounds_.max = positions_.front();
  for (const auto& p : positions_) {
    if (!p.allFinite()) throw std::invalid_argument("Scene: non-finite vertex");
    bounds_.min = bounds_.min.cwiseMin(p);
    bounds_.max = bounds_.max.cwiseMax(p);
  }
}

Scene Scene::translated(const Eigen::Vector3d& offset) const {
  std::vector<Eigen::Vector3d> moved = positions_;
  for (auto& p : moved) p += offset;
  return {id_, std::move(moved), colors_};
}

// ---------------------------------------------------------------------------
// PLY

namespace {

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<Scalar> parse_scalar(std::string_view s) {
  if (s == "char" || s == "int8") return Scalar::I8;
  if (s == "uchar" || s == "uint8") return Scalar::U8;
  if (s == "short" || s == "int16") return Scalar::I16;
  if (s == "ushort" || s == "uint16") return Scalar::U16;
  if (s == "int" || s == "int32") return Scalar::I32;
  if (s == "uint" || s == "uint32") return Scalar::U32;
  if (s == "float" || s == "float32") return Scalar::F32;
  if (s == "double" || s == "float64") return Scalar::F64;
  return std::nullopt;
}

std::size_t scalar_size(Scalar t) {
  switch (t) {
    case Scalar::I8:
    case Scalar::U8: return 1;
    case Scalar::I16:
    case Scalar::U16: return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32: return 4;
    case Scalar::F64: return 8;
  }
  return 0;
}

bool is_float(Scalar t) { return t == Scalar::F32 || t == Scalar::F64; }

struct Property {
  std::string name;
  Scalar type = Scalar::F32;
  bool is_list = false;
  Scalar count_type = Scalar::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
  std::size_t body_offset = 0;
};

[[noreturn]] void malformed(const std::string& why) {
  throw PlyError(PlyError::Kind::MalformedHeader, "malformed PLY header: " + why);
}

Header parse_header(const std::string& data) {
  Header h;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= data.size()) return std::nullopt;
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) return std::nullopt;
    std::string line = data.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  auto first = next_line();
  if (!first || *first != "ply") malformed("missing 'ply' magic");
  bool have_format = false;
  for (;;) {
    auto line = next_line();
    if (!line) malformed("no end_header");
    std::istringstream in(*line);
    std::string key;
    in >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt_name, version;
      in >> fmt_name >> version;
      if (fmt_name == "ascii") {
        h.binary = false;
      } else if (fmt_name == "binary_little_endian") {
        h.binary = true;
      } else {
        malformed("unsupported format '" + fmt_name + "'");
      }
      have_format = true;
    } else if (key == "element") {
      Element e;
      long long count = -1;
      in >> e.name >> count;
      if (e.name.empty() || count < 0 || in.fail()) malformed("bad element line '" + *line + "'");
      e.count = static_cast<std::size_t>(count);
      h.elements.push_back(std::move(e));
    } else if (key == "property") {
      if (h.elements.empty()) malformed("property before any element");
      Property p;
      std::string type;
      in >> type;
      if (type == "list") {
        std::string count_type, item_type;
        in >> count_type >> item_type >> p.name;
        auto ct = parse_scalar(count_type);
        auto it = parse_scalar(item_type);
        if (!ct || !it || is_float(*ct) || p.name.empty()) malformed("bad list property '" + *line + "'");
        p.is_list = true;
        p.count_type = *ct;
        p.type = *it;
      } else {
        auto t = parse_scalar(type);
        in >> p.name;
        if (!t || p.name.empty()) malformed("bad property '" + *line + "'");
        p.type = *t;
      }
      h.elements.back().props.push_back(std::move(p));
    } else {
      malformed("unknown keyword '" + key + "'");
    }
  }
  if (!have_format) malformed("no format line");
  h.body_offset = pos;
  return h;
}

double read_binary_scalar(const char* p, Scalar t) {
  switch (t) {
    case Scalar::I8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case Scalar::U8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case Scalar::I16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::U16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::I32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::U32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::F32: { float v; std::memcpy(&v, p, 4); return v; }
    case Scalar::F64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

/// Sequential reader over either body encoding.
class BodyReader {
 public:
  BodyReader(const std::string& data, std::size_t offset, bool binary)
      : data_(data), pos_(offset), binary_(binary) {}

  double next(Scalar t) {
    if (binary_) {
      const std::size_t n = scalar_size(t);
      if (pos_ + n > data_.size()) truncated();
      const double v = read_binary_scalar(data_.data() + pos_, t);
      pos_ += n;
      return v;
    }
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (pos_ >= data_.size()) truncated();
    std::size_t end = pos_;
    while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
    double v = 0.0;
    const auto res = std::from_chars(data_.data() + pos_, data_.data() + end, v);
    if (res.ec != std::errc() || res.ptr != data_.data() + end) {
      throw PlyError(PlyError::Kind::BadValue,
                     "bad PLY value '" + data_.substr(pos_, end - pos_) + "'");
    }
    pos_ = end;
    return v;
  }

 private:
  [[noreturn]] static void truncated() {
    throw PlyError(PlyError::Kind::Truncated, "truncated PLY payload");
  }

  const std::string& data_;
  std::size_t pos_;
  bool binary_;
};

int find_prop(const Element& e, std::initializer_list<std::string_view> names) {
  for (std::size_t i = 0; i < e.props.size(); ++i) {
    for (auto n : names) {
      if (e.props[i].name == n && !e.props[i].is_list) return static_cast<int>(i);
    }
  }
  return -1;
}

std::uint8_t to_channel(double v, Scalar t) {
  // Float colors are taken to be on a 0-1 scale.
  if (is_float(t)) v *= 255.0;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Scene load_scene(const std::filesystem::path& path, std::string scene_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PlyError(PlyError::Kind::Io, "cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const Header h = parse_header(data);
  const auto vit = std::find_if(h.elements.begin(), h.elements.end(),
                                [](const Element& e) { return e.name == "vertex"; });
  if (vit == h.elements.end()) malformed("no vertex element");
  const int ix = find_prop(*vit, {"x"}), iy = find_prop(*vit, {"y"}), iz = find_prop(*vit, {"z"});
  if (ix < 0 || iy < 0 || iz < 0) {
    throw PlyError(PlyError::Kind::MissingPosition, "missing position properties");
  }
  const int ir = find_prop(*vit, {"red", "diffuse_red", "r"});
  const int ig = find_prop(*vit, {"green", "diffuse_green", "g"});
  const int ib = find_prop(*vit, {"blue", "diffuse_blue", "b"});
  if (ir < 0 || ig < 0 || ib < 0) throw PlyError(PlyError::Kind::MissingColor, "missing color properties");
  if (vit->count == 0) throw PlyError(PlyError::Kind::BadValue, "PLY has no vertices");

  BodyReader body(data, h.body_offset, h.binary);
  std::vector<Eigen::Vector3d> positions;
  std::vector<Rgb> colors;
  std::vector<double> row;
  for (const Element& e : h.elements) {
    const bool is_vertex = &e == &*vit;
    if (is_vertex) {
      positions.reserve(e.count);
      colors.reserve(e.count);
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      row.assign(e.props.size(), 0.0);
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const Property& p = e.props[k];
        if (p.is_list) {
          const double n = body.next(p.count_type);
          if (n < 0) throw PlyError(PlyError::Kind::BadValue, "negative PLY list length");
          for (long j = 0; j < static_cast<long>(n); ++j) body.next(p.type);
        } else {
          row[k] = body.next(p.type);
        }
      }
      if (!is_vertex) continue;
      Eigen::Vector3d pos(row[static_cast<std::size_t>(ix)], row[static_cast<std::size_t>(iy)],
                          row[static_cast<std::size_t>(iz)]);
      if (!pos.allFinite()) throw PlyError(PlyError::Kind::BadValue, fmt::format("non-finite vertex {}", i));
      positions.push_back(pos);
      colors.push_back({to_channel(row[static_cast<std::size_t>(ir)], vit->props[static_cast<std::size_t>(ir)].type),
                        to_channel(row[static_cast<std::size_t>(ig)], vit->props[static_cast<std::size_t>(ig)].type),
                        to_channel(row[static_cast<std::size_t>(ib)], vit->props[static_cast<std::size_t>(ib)].type)});
    }
    if (is_vertex) break;  // later elements are not needed
  }
  if (scene_id.empty()) scene_id = path.stem().string();
  return {std::move(scene_id), std::move(positions), std::move(colors)};
}

void write_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PlyError(PlyError::Kind::Io, "cannot write " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n"
      << "comment scene " << scene.id() << "\n"
      << "element vertex " << scene.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  std::vector<char> buf(scene.size() * 27);
  char* p = buf.data();
  for (std::size_t i = 0; i < scene.size(); ++i) {
    std::memcpy(p, scene.positions()[i].data(), 24);
    std::memcpy(p + 24, scene.colors()[i].data(), 3);
    p += 27;
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw PlyError(PlyError::Kind::Io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Procedural rooms

namespace {

struct Quad {
  Eigen::Vector3d origin;
  Eigen::Vector3d u;  // edge vectors; the quad is origin + a*u + b*v, a,b in [0,1]
  Eigen::Vector3d v;
  Rgb base;
  double area() const { return u.cross(v).norm(); }
};

Rgb random_color(Rng& rng, int lo, int hi) {
  auto ch = [&] { return static_cast<std::uint8_t>(lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)))); };
  const std::uint8_t r = ch();
  const std::uint8_t g = ch();
  const std::uint8_t b = ch();
  return {r, g, b};
}

constexpr double kCheckerCell = 0.25;  // meters

}  // namespace

Scene procedural_scene(std::uint64_t seed, const ProceduralSpec& spec, std::string scene_id) {
  const bool finite = std::isfinite(spec.size_x) && std::isfinite(spec.size_y) && std::isfinite(spec.height);
  if (!finite || spec.size_x <= 0.0 || spec.size_y <= 0.0 || spec.height <= 0.0) {
    throw std::invalid_argument("procedural_scene: degenerate room extents");
  }
  if (spec.box_count < 0) throw std::invalid_argument("procedural_scene: negative box count");
  if (spec.vertex_count == 0) throw std::invalid_argument("procedural_scene: vertex_count must be positive");

  Rng rng(seed);
  const double X = spec.size_x, Y = spec.size_y, H = spec.height;
  const Eigen::Vector3d ex(X, 0, 0), ey(0, Y, 0), ez(0, 0, H);

  std::vector<Quad> quads;
  quads.push_back({Eigen::Vector3d::Zero(), ex, ey, random_color(rng, 90, 170)});  // floor
  quads.push_back({Eigen::Vector3d::Zero(), ex, ez, random_color(rng, 120, 230)});
  quads.push_back({Eigen::Vector3d(0, Y, 0), ex, ez, random_color(rng, 120, 230)});
  quads.push_back({Eigen::Vector3d::Zero(), ey, ez, random_color(rng, 120, 230)});
  quads.push_back({Eigen::Vector3d(X, 0, 0), ey, ez, random_color(rng, 120, 230)});

  for (int b = 0; b < spec.box_count; ++b) {
    const double w = std::min(uniform(rng, 0.4, 1.2), 0.9 * X);
    const double d = std::min(uniform(rng, 0.4, 1.2), 0.9 * Y);
    const double h = std::min(uniform(rng, 0.4, 1.2), 0.9 * H);
    const double x0 = uniform(rng, 0.0, X - w);
    const double y0 = uniform(rng, 0.0, Y - d);
    const Rgb c = random_color(rng, 20, 255);
    const Eigen::Vector3d o(x0, y0, 0.0), bx(w, 0, 0), by(0, d, 0), bz(0, 0, h);
    quads.push_back({o + bz, bx, by, c});  // top
    quads.push_back({o, bx, bz, c});
    quads.push_back({o + by, bx, bz, c});
    quads.push_back({o, by, bz, c});
    quads.push_back({o + bx, by, bz, c});
  }

  // Area-proportional split with largest remainders so the total is exact.
  double total_area = 0.0;
  for (const auto& q : quads) total_area += q.area();
  const auto n_total = spec.vertex_count;
  std::vector<std::size_t> counts(quads.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const double exact = static_cast<double>(n_total) * quads[i].area() / total_area;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n_total; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];

  std::vector<Eigen::Vector3d> positions;
  std::vector<Rgb> colors;
  positions.reserve(n_total);
  colors.reserve(n_total);
  const Aabb room{Eigen::Vector3d::Zero(), Eigen::Vector3d(X, Y, H)};
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const Quad& q = quads[i];
    const double lu = q.u.norm(), lv = q.v.norm();
    for (std::size_t k = 0; k < counts[i]; ++k) {
      const double a = uniform01(rng), b = uniform01(rng);
      Eigen::Vector3d p = q.origin + a * q.u + b * q.v;
      p = p.cwiseMax(room.min).cwiseMin(room.max);  // guard against round-off at the shell
      const long cell = static_cast<long>(std::floor(a * lu / kCheckerCell)) +
                        static_cast<long>(std::floor(b * lv / kCheckerCell));
      const double shade = (cell % 2 == 0 ? 1.0 : 0.7) * uniform(rng, 0.92, 1.0);
      colors.push_back({static_cast<std::uint8_t>(std::lround(q.base[0] * shade)),
                        static_cast<std::uint8_t>(std::lround(q.base[1] * shade)),
                        static_cast<std::uint8_t>(std::lround(q.base[2] * shade))});
      positions.push_back(p);
    }
  }
  if (scene_id.empty()) scene_id = fmt::format("proc-{}", seed);
  return {std::move(scene_id), std::move(positions), std::move(colors)};
}

}  // namespace viewplan
