#include "viewplan/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "viewplan/actions.hpp"

namespace viewplan {

// ---------------------------------------------------------------------------
// Factors

std::optional<double> factor_value(const FactorVector& f, std::size_t index) {
  switch (index) {
    case 0: return f.pos_dist;
    case 1: return f.rot_dist;
    case 2: return f.unified_dist;
    case 3: return f.horiz_dist;
    case 4: return f.height_diff;
    case 5: return f.vis_init_norm;
    case 6: return f.vis_target_norm;
    case 7: return f.vis_iou;
    case 8: return f.forward_alignment;
    case 9: return f.target_bearing;
    case 10: return f.target_elevation;
    case 11: return f.orientation_agreement;
    default: throw std::out_of_range("factor index");
  }
}

json to_json(const FactorVector& f) {
  json j;
  for (std::size_t i = 0; i < kFactorNames.size(); ++i) {
    const auto v = factor_value(f, i);
    j[std::string(kFactorNames[i])] = v ? json(*v) : json(nullptr);
  }
  return j;
}

Eigen::Vector3d camera_forward(const Pose& p, ForwardAxis axis) {
  const Eigen::Vector3d z = p.rotation.col(2);
  return axis == ForwardAxis::PlusZ ? z : Eigen::Vector3d(-z);
}

namespace {

double clip_unit(double x) { return std::clamp(x, -1.0, 1.0); }
double degrees(double rad) { return rad * 180.0 / M_PI; }

std::size_t intersection_size(const VertexSet& a, const VertexSet& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n, ++i, ++j;
    }
  }
  return n;
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return double(num) / double(den);
}

}  // namespace

FactorVector compute_factors(const Pose& init, const Pose& target, const FactorOptions& opt,
                             const VertexSet* vis_init, const VertexSet* vis_target) {
  FactorVector f;
  const ViewDistance d = view_distance(init, target, opt.steps);
  const Eigen::Vector3d delta = target.position - init.position;
  f.pos_dist = d.position;
  f.rot_dist = d.rotation_deg;
  f.unified_dist = d.unified;
  f.horiz_dist = delta.head<2>().norm();
  f.height_diff = std::abs(delta.z());

  if (vis_init && vis_target) {
    const std::size_t inter = intersection_size(*vis_init, *vis_target);
    f.vis_init_norm = ratio(inter, vis_init->size());
    f.vis_target_norm = ratio(inter, vis_target->size());
    f.vis_iou = ratio(inter, vis_init->size() + vis_target->size() - inter);
  }

  const Eigen::Vector3d f_init = camera_forward(init, opt.forward).normalized();
  const Eigen::Vector3d f_target = camera_forward(target, opt.forward).normalized();
  if (delta.norm() > 1e-12) {
    const double align = clip_unit(f_init.dot(delta.normalized()));
    f.forward_alignment = align;
    f.target_bearing = degrees(std::acos(align));
    f.target_elevation = degrees(std::atan2(delta.z(), f.horiz_dist));
  }
  f.orientation_agreement = clip_unit(f_init.dot(f_target));
  return f;
}

// ---------------------------------------------------------------------------
// Rank correlation

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: size mismatch");
  if (xs.size() < 2) throw std::invalid_argument("spearman: need at least two samples");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = double(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<FactorCorrelation> factor_correlations(const std::vector<FactorVector>& factors,
                                                   const std::map<std::string, std::vector<double>>& outcomes) {
  std::vector<FactorCorrelation> out;
  for (const auto& [name, ys] : outcomes) {
    if (ys.size() != factors.size()) throw std::invalid_argument("outcome column " + name + " has wrong length");
  }
  for (std::size_t fi = 0; fi < kFactorNames.size(); ++fi) {
    for (const auto& [name, ys] : outcomes) {
      std::vector<double> a, b;
      for (std::size_t i = 0; i < factors.size(); ++i) {
        if (const auto v = factor_value(factors[i], fi)) {
          a.push_back(*v);
          b.push_back(ys[i]);
        }
      }
      FactorCorrelation c{std::string(kFactorNames[fi]), name, std::nullopt, a.size()};
      if (a.size() >= 2) c.rho = spearman(a, b);
      out.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rollouts and pairs

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::map<std::string, PairInfo> pairs_from_manifest(const std::vector<json>& lines, const StepSizes& steps,
                                                    double short_long_boundary) {
  std::map<std::string, PairInfo> out;
  for (const json& j : lines) {
    PairInfo p;
    p.instance_id = j.at("instance_id").get<std::string>();
    p.kind = lower(j.value("kind", std::string()));
    p.scene_id = j.value("scene_id", std::string());
    p.init = pose_from_json(j.at("init_pose"));
    p.target = pose_from_json(j.at("target_pose"));
    const ViewDistance d = view_distance(p.init, p.target, steps);
    p.d_pos = d.position;
    p.d_rot = d.rotation_deg;
    p.unified = d.unified;
    p.difficulty = lower(j.value("difficulty", std::string(d.unified < short_long_boundary ? "short" : "long")));
    if (j.contains("correct_index")) p.correct_index = j["correct_index"].get<int>();
    if (!out.emplace(p.instance_id, p).second) throw std::invalid_argument("duplicate instance " + p.instance_id);
  }
  return out;
}

std::vector<EpisodeSummary> episodes_from_rollouts(const std::vector<json>& lines) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const json*>> turns;
  std::map<std::string, const json*> outcomes;
  for (const json& j : lines) {
    const auto id = j.at("episode_id").get<std::string>();
    if (!turns.count(id) && !outcomes.count(id)) order.push_back(id);
    // lines after the outcome mean two logs reuse an id; merging them would corrupt both
    if (outcomes.count(id)) throw std::invalid_argument("episode id " + id + " appears in more than one episode");
    if (j.at("type") == "outcome") {
      outcomes[id] = &j;
    } else {
      turns[id].push_back(&j);
    }
  }
  std::vector<EpisodeSummary> out;
  for (const auto& id : order) {
    const auto it = outcomes.find(id);
    if (it == outcomes.end()) throw std::invalid_argument("episode " + id + " has no outcome line");
    const json& o = *it->second;
    EpisodeSummary e;
    e.episode_id = id;
    e.instance_id = o.at("instance_id").get<std::string>();
    e.scene_id = o.at("scene_id").get<std::string>();
    e.variant = o.value("variant", std::string("default"));
    e.init = pose_from_json(o.at("init_pose"));
    e.target = pose_from_json(o.at("target_pose"));
    e.success = o.at("success").get<bool>();
    e.reward = o.at("reward").get<double>();
    e.turns = o.at("turns").get<int>();
    e.termination = o.at("termination").get<std::string>();
    auto& ts = turns[id];
    std::sort(ts.begin(), ts.end(),
              [](const json* a, const json* b) { return a->at("turn").get<int>() < b->at("turn").get<int>(); });
    e.poses.push_back(e.init);
    for (const json* t : ts) {
      e.turn_actions.push_back(actions_from_json(t->at("actions")));
      e.poses.push_back(pose_from_json(t->at("pose")));
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Success tables

std::vector<ScoredSample> samples_from_episodes(const std::vector<EpisodeSummary>& episodes) {
  std::vector<ScoredSample> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back({e.instance_id, e.success});
  return out;
}

std::vector<ScoredSample> score_choices(const std::vector<json>& predictions,
                                        const std::map<std::string, PairInfo>& pairs) {
  std::vector<ScoredSample> out;
  for (const json& j : predictions) {
    const auto id = j.at("instance_id").get<std::string>();
    const auto it = pairs.find(id);
    if (it == pairs.end()) throw std::invalid_argument("unknown instance " + id);
    if (!it->second.correct_index) throw std::invalid_argument("instance " + id + " is not multiple-choice");
    const json& pred = j.at("prediction");
    int index = -1;
    if (pred.is_number_integer()) {
      index = pred.get<int>();
    } else if (pred.is_string() && pred.get<std::string>().size() == 1) {
      index = pred.get<std::string>()[0] - 'A';
    }
    out.push_back({id, index == *it->second.correct_index});
  }
  return out;
}

std::optional<double> RateCell::rate() const {
  if (count == 0) return std::nullopt;
  return double(successes) / double(count);
}

namespace {

std::vector<BinRow> make_bins(const std::vector<double>& edges) {
  if (edges.empty()) throw std::invalid_argument("bin edges must not be empty");
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw std::invalid_argument("bin edges must be strictly increasing");
  }
  std::vector<BinRow> rows;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) rows.push_back({edges[i], edges[i + 1], {}});
  rows.push_back({edges.back(), std::numeric_limits<double>::infinity(), {}});
  return rows;
}

void add_to_bins(std::vector<BinRow>& rows, double v, bool success) {
  // first bin is closed on both ends; later bins are (lo, hi]
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool in = i == 0 ? (v >= rows[i].lo && v <= rows[i].hi) : (v > rows[i].lo && v <= rows[i].hi);
    if (in) {
      ++rows[i].cell.count;
      rows[i].cell.successes += success;
      return;
    }
  }
}

void add(RateCell& c, bool success) {
  ++c.count;
  c.successes += success;
}

}  // namespace

SuccessTable success_table(const std::vector<ScoredSample>& samples, const std::map<std::string, PairInfo>& pairs,
                           const BinEdges& bins, double short_long_boundary) {
  SuccessTable t;
  t.by_rotation = make_bins(bins.rotation_deg);
  t.by_position = make_bins(bins.position_m);
  std::set<std::string> mismatched;
  for (const auto& s : samples) {
    const auto it = pairs.find(s.instance_id);
    if (it == pairs.end()) throw std::invalid_argument("unknown instance " + s.instance_id);
    const PairInfo& p = it->second;
    const bool is_short = p.difficulty == "short";
    if (is_short != (p.unified < short_long_boundary)) mismatched.insert(p.instance_id);
    add(is_short ? t.short_split : t.long_split, s.success);
    add(t.all, s.success);
    add_to_bins(t.by_rotation, p.d_rot, s.success);
    add_to_bins(t.by_position, p.d_pos, s.success);
  }
  t.difficulty_mismatches = mismatched.size();
  if (!mismatched.empty()) {
    spdlog::warn("{} instances carry a difficulty tag that disagrees with unified distance", mismatched.size());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Coverage and turns

CoverageCurve aggregate_curves(const std::vector<std::vector<double>>& curves, double min_count_fraction) {
  CoverageCurve c;
  std::size_t longest = 0;
  for (const auto& v : curves) longest = std::max(longest, v.size());
  for (std::size_t k = 0; k < longest; ++k) {
    std::vector<double> vals;
    for (const auto& v : curves) {
      if (k < v.size()) vals.push_back(v[k]);
    }
    const double n = double(vals.size());
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
    double var = 0;
    for (double x : vals) var += (x - mean) * (x - mean);
    c.mean.push_back(mean);
    c.stddev.push_back(std::sqrt(var / n));
    c.counts.push_back(vals.size());
  }
  const std::size_t max_count = c.counts.empty() ? 0 : *std::max_element(c.counts.begin(), c.counts.end());
  std::size_t keep = c.counts.size();
  while (keep > 0 && double(c.counts[keep - 1]) < min_count_fraction * double(max_count)) --keep;
  c.excluded_turns = c.counts.size() - keep;
  c.mean.resize(keep);
  c.stddev.resize(keep);
  c.counts.resize(keep);
  return c;
}

namespace {

VertexSet set_union(const VertexSet& a, const VertexSet& b) {
  VertexSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

CoverageResult coverage_curves(const std::vector<EpisodeSummary>& episodes,
                               const std::map<std::string, const Scene*>& scenes, const CoverageOptions& opt) {
  CoverageResult r;
  for (const auto& e : episodes) {
    const auto it = scenes.find(e.scene_id);
    if (it == scenes.end() || !it->second) throw std::invalid_argument("episode " + e.episode_id + ": unknown scene");
    const Scene& scene = *it->second;
    if (opt.check_replay) {
      const bool snap = e.variant != "no-snap";
      for (std::size_t k = 0; k < e.turn_actions.size(); ++k) {
        const ViewDistance d = view_distance(execute(e.poses[k], e.turn_actions[k], opt.steps, snap), e.poses[k + 1]);
        if (d.position > 1e-6 || d.rotation_deg > 1e-6) {
          throw std::invalid_argument(fmt::format("episode {} turn {} does not replay", e.episode_id, k + 1));
        }
      }
    }
    const double total = double(scene.size());
    const VertexSet target = visible_vertices(scene, e.target, opt.intrinsics);
    VertexSet seen;
    std::vector<double> sc, tc;
    for (const Pose& p : e.poses) {
      seen = set_union(seen, visible_vertices(scene, p, opt.intrinsics));
      sc.push_back(total > 0 ? double(seen.size()) / total : 0.0);
      if (!target.empty()) tc.push_back(double(intersection_size(seen, target)) / double(target.size()));
    }
    r.per_episode_scene.push_back(std::move(sc));
    r.per_episode_target.push_back(std::move(tc));
  }
  r.scene = aggregate_curves(r.per_episode_scene, opt.min_count_fraction);
  std::vector<std::vector<double>> targets;
  for (const auto& v : r.per_episode_target) {
    if (!v.empty()) targets.push_back(v);
  }
  r.target = aggregate_curves(targets, opt.min_count_fraction);
  return r;
}

std::vector<TurnBucket> turn_distribution(const std::vector<EpisodeSummary>& episodes) {
  std::map<int, TurnBucket> buckets;
  for (const auto& e : episodes) {
    TurnBucket& b = buckets[e.turns];
    b.turns = e.turns;
    ++b.count;
    b.successes += e.success;
  }
  std::vector<TurnBucket> out;
  for (const auto& [_, b] : buckets) out.push_back(b);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string num(std::optional<double> v) { return v ? fmt::format("{:.6g}", *v) : std::string(); }

std::string rate_row(const std::string& name, const RateCell& c) {
  return fmt::format("{},{},{},{}\n", name, c.count, c.successes, num(c.rate()));
}

}  // namespace

std::string success_table_csv(const SuccessTable& t) {
  return "split,count,successes,rate\n" + rate_row("short", t.short_split) + rate_row("long", t.long_split) +
         rate_row("all", t.all);
}

std::string bins_csv(const SuccessTable& t) {
  std::string s = "axis,lo,hi,count,successes,rate\n";
  auto rows = [&](const char* axis, const std::vector<BinRow>& bins) {
    for (const auto& b : bins) {
      s += fmt::format("{},{:g},{},{},{},{}\n", axis, b.lo, std::isinf(b.hi) ? "inf" : fmt::format("{:g}", b.hi),
                       b.cell.count, b.cell.successes, num(b.cell.rate()));
    }
  };
  rows("rotation_deg", t.by_rotation);
  rows("position_m", t.by_position);
  return s;
}

std::string coverage_csv(const CoverageResult& c) {
  std::string s = "turn,scene_mean,scene_std,scene_n,target_mean,target_std,target_n\n";
  const std::size_t n = std::max(c.scene.mean.size(), c.target.mean.size());
  for (std::size_t k = 0; k < n; ++k) {
    s += fmt::format("{}", k);
    for (const CoverageCurve* cv : {&c.scene, &c.target}) {
      if (k < cv->mean.size()) {
        s += fmt::format(",{:.6f},{:.6f},{}", cv->mean[k], cv->stddev[k], cv->counts[k]);
      } else {
        s += ",,,0";
      }
    }
    s += '\n';
  }
  return s;
}

std::string turn_distribution_csv(const std::vector<TurnBucket>& b) {
  std::string s = "turns,count,successes,rate\n";
  for (const auto& t : b) s += fmt::format("{},{},{},{:.6g}\n", t.turns, t.count, t.successes, t.rate());
  return s;
}

std::string factors_csv(const std::vector<std::string>& ids, const std::vector<FactorVector>& f) {
  std::string s = "instance_id";
  for (auto n : kFactorNames) s += fmt::format(",{}", n);
  s += '\n';
  for (std::size_t i = 0; i < f.size(); ++i) {
    s += ids.at(i);
    for (std::size_t k = 0; k < kFactorNames.size(); ++k) s += "," + num(factor_value(f[i], k));
    s += '\n';
  }
  return s;
}

std::string correlations_csv(const std::vector<FactorCorrelation>& c) {
  std::string s = "factor,outcome,rho,n\n";
  for (const auto& r : c) s += fmt::format("{},{},{},{}\n", r.factor, r.outcome, num(r.rho), r.n);
  return s;
}

// ---------------------------------------------------------------------------
// Plots

namespace {

struct Canvas {
  RgbImage img;
  int left = 40, right = 12, top = 12, bottom = 30;

  Canvas(int w, int h) {
    img.width = w;
    img.height = h;
    img.rgb.assign(std::size_t(w) * std::size_t(h) * 3, 255);
  }
  void put(int x, int y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    const std::size_t i = (std::size_t(y) * std::size_t(img.width) + std::size_t(x)) * 3;
    img.rgb[i] = c[0], img.rgb[i + 1] = c[1], img.rgb[i + 2] = c[2];
  }
  void blend(int x, int y, const Rgb& c, double alpha) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    const std::size_t i = (std::size_t(y) * std::size_t(img.width) + std::size_t(x)) * 3;
    for (int k = 0; k < 3; ++k) {
      img.rgb[i + k] = static_cast<std::uint8_t>(std::lround(img.rgb[i + k] * (1 - alpha) + c[k] * alpha));
    }
  }
  void line(int x0, int y0, int x1, int y1, const Rgb& c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }
  [[nodiscard]] int plot_w() const { return img.width - left - right; }
  [[nodiscard]] int plot_h() const { return img.height - top - bottom; }
  [[nodiscard]] int px(double t) const { return left + int(std::lround(t * plot_w())); }
  [[nodiscard]] int py(double t) const { return top + plot_h() - int(std::lround(std::clamp(t, 0.0, 1.0) * plot_h())); }
  void axes() {
    const Rgb grid{225, 225, 225}, ink{60, 60, 60};
    for (int k = 1; k < 5; ++k) line(px(0), py(k / 5.0), px(1), py(k / 5.0), grid);
    line(px(0), py(0), px(1), py(0), ink);
    line(px(0), py(0), px(0), py(1), ink);
  }
};

}  // namespace

RgbImage line_plot(const std::vector<PlotSeries>& series, double y_min, double y_max, int width, int height) {
  if (!(y_max > y_min)) throw std::invalid_argument("line_plot: empty y range");
  Canvas cv(width, height);
  cv.axes();
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.y.size());
  const double span = n > 1 ? double(n - 1) : 1.0;
  auto ty = [&](double y) { return (y - y_min) / (y_max - y_min); };
  for (const auto& s : series) {
    if (s.band.size() == s.y.size()) {
      for (std::size_t k = 0; k + 1 < s.y.size(); ++k) {
        for (int x = cv.px(k / span); x <= cv.px((k + 1) / span); ++x) {
          const double t = (x - cv.px(k / span)) / std::max(1.0, double(cv.px((k + 1) / span) - cv.px(k / span)));
          const double y = s.y[k] + t * (s.y[k + 1] - s.y[k]);
          const double b = s.band[k] + t * (s.band[k + 1] - s.band[k]);
          for (int yy = cv.py(ty(y + b)); yy <= cv.py(ty(y - b)); ++yy) cv.blend(x, yy, s.color, 0.2);
        }
      }
    }
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      const int x = cv.px(k / span), y = cv.py(ty(s.y[k]));
      if (k + 1 < s.y.size()) cv.line(x, y, cv.px((k + 1) / span), cv.py(ty(s.y[k + 1])), s.color);
      for (int d = -2; d <= 2; ++d) cv.put(x + d, y, s.color), cv.put(x, y + d, s.color);
    }
  }
  return cv.img;
}

RgbImage bar_plot(const std::vector<double>& values, double y_max, int width, int height) {
  if (!(y_max > 0)) throw std::invalid_argument("bar_plot: y_max must be positive");
  Canvas cv(width, height);
  cv.axes();
  const Rgb fill{31, 119, 180};
  const double slot = values.empty() ? 1.0 : 1.0 / double(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int x0 = cv.px((double(i) + 0.15) * slot), x1 = cv.px((double(i) + 0.85) * slot);
    for (int x = x0; x <= x1; ++x) {
      for (int y = cv.py(values[i] / y_max); y < cv.py(0); ++y) cv.put(x, y, fill);
    }
  }
  return cv.img;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

json cell_json(const RateCell& c) { return {{"count", c.count}, {"successes", c.successes}, {"rate", c.rate() ? json(*c.rate()) : json(nullptr)}}; }

json table_json(const SuccessTable& t) {
  return {{"short", cell_json(t.short_split)},
          {"long", cell_json(t.long_split)},
          {"all", cell_json(t.all)},
          {"difficulty_mismatches", t.difficulty_mismatches}};
}

}  // namespace

json run_analysis(const AnalysisInputs& in, const std::filesystem::path& out_dir) {
  const auto pairs = pairs_from_manifest(in.manifest, in.factors.steps);
  const auto episodes = episodes_from_rollouts(in.rollouts);
  json summary = {{"episodes", episodes.size()}, {"tasks", json::object()}};

  // Short/Long/All rows: IVP from rollouts, P2V/V2P from choice predictions.
  if (!episodes.empty()) {
    const SuccessTable t = success_table(samples_from_episodes(episodes), pairs, in.bins);
    summary["tasks"]["ivp"] = table_json(t);
    write_file_atomic(out_dir / "ivp_success.csv", success_table_csv(t));
    write_file_atomic(out_dir / "ivp_bins.csv", bins_csv(t));
    std::vector<double> rot, pos;
    for (const auto& b : t.by_rotation) rot.push_back(b.cell.rate().value_or(0.0));
    for (const auto& b : t.by_position) pos.push_back(b.cell.rate().value_or(0.0));
    write_png(out_dir / "ivp_success_by_rotation.png", bar_plot(rot, 1.0));
    write_png(out_dir / "ivp_success_by_position.png", bar_plot(pos, 1.0));
  }
  if (!in.predictions.empty()) {
    std::map<std::string, std::vector<ScoredSample>> by_kind;
    for (const auto& s : score_choices(in.predictions, pairs)) by_kind[pairs.at(s.instance_id).kind].push_back(s);
    for (const auto& [kind, samples] : by_kind) {
      const SuccessTable t = success_table(samples, pairs, in.bins);
      summary["tasks"][kind] = table_json(t);
      write_file_atomic(out_dir / (kind + "_success.csv"), success_table_csv(t));
      write_file_atomic(out_dir / (kind + "_bins.csv"), bins_csv(t));
    }
  }

  // Factors over the IVP instances that were played, against mean success.
  std::vector<std::string> ids;
  std::map<std::string, std::pair<double, int>> wins;
  for (const auto& e : episodes) {
    auto& w = wins[e.instance_id];
    if (w.second == 0) ids.push_back(e.instance_id);
    w.first += e.success;
    ++w.second;
  }
  std::vector<FactorVector> factors;
  std::vector<double> success;
  for (const auto& id : ids) {
    const auto it = pairs.find(id);
    if (it == pairs.end()) throw std::invalid_argument("unknown instance " + id);
    const PairInfo& p = it->second;
    const auto scene = in.scenes.find(p.scene_id);
    if (scene != in.scenes.end() && scene->second) {
      const VertexSet vi = visible_vertices(*scene->second, p.init, in.coverage.intrinsics);
      const VertexSet vt = visible_vertices(*scene->second, p.target, in.coverage.intrinsics);
      factors.push_back(compute_factors(p.init, p.target, in.factors, &vi, &vt));
    } else {
      factors.push_back(compute_factors(p.init, p.target, in.factors));
    }
    success.push_back(wins[id].first / wins[id].second);
  }
  if (!factors.empty()) {
    write_file_atomic(out_dir / "factors.csv", factors_csv(ids, factors));
    const auto corr = factor_correlations(factors, {{"success", success}});
    write_file_atomic(out_dir / "factor_correlations.csv", correlations_csv(corr));
    json cj = json::object();
    for (const auto& c : corr) cj[c.factor] = c.rho ? json(*c.rho) : json(nullptr);
    summary["factor_correlations"] = cj;
  }

  const auto turns = turn_distribution(episodes);
  write_file_atomic(out_dir / "turn_distribution.csv", turn_distribution_csv(turns));
  json tj = json::array();
  std::vector<double> counts, rates;
  for (const auto& b : turns) {
    tj.push_back({{"turns", b.turns}, {"count", b.count}, {"successes", b.successes}, {"rate", b.rate()}});
    counts.push_back(double(b.count));
    rates.push_back(b.rate());
  }
  summary["turn_distribution"] = tj;
  if (!turns.empty()) {
    write_png(out_dir / "turn_counts.png", bar_plot(counts, *std::max_element(counts.begin(), counts.end())));
    write_png(out_dir / "turn_success_rate.png", bar_plot(rates, 1.0));
  }

  if (!in.scenes.empty() && !episodes.empty()) {
    const CoverageResult c = coverage_curves(episodes, in.scenes, in.coverage);
    write_file_atomic(out_dir / "coverage.csv", coverage_csv(c));
    write_png(out_dir / "coverage_scene.png", line_plot({{c.scene.mean, c.scene.stddev, {31, 119, 180}}}, 0, 1));
    write_png(out_dir / "coverage_target.png", line_plot({{c.target.mean, c.target.stddev, {214, 39, 40}}}, 0, 1));
    summary["coverage"] = {{"scene_final", c.scene.mean.empty() ? json(nullptr) : json(c.scene.mean.back())},
                           {"target_final", c.target.mean.empty() ? json(nullptr) : json(c.target.mean.back())},
                           {"turns", c.scene.mean.size()},
                           {"excluded_turns", c.scene.excluded_turns}};
  }
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace viewplan
