#include <random>

#include <benchmark/benchmark.h>

#include "viewplan/analysis.hpp"
#include "viewplan/distill.hpp"
#include "viewplan/planner.hpp"
#include "viewplan/render.hpp"
#include "viewplan/view_graph.hpp"

namespace viewplan {
namespace {

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3, 3), a(-180, 180), p(-80, 80);
  return euler_compose({a(rng), p(rng), a(rng)}, {u(rng), u(rng), u(rng)});
}

std::vector<Pose> poses(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Pose> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_pose(rng));
  return out;
}

void BM_ViewDistance(benchmark::State& state) {
  const auto ps = poses(256, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(view_distance(ps[i % 256], ps[(i + 1) % 256]));
    ++i;
  }
}
BENCHMARK(BM_ViewDistance);

void BM_SnapOrientation(benchmark::State& state) {
  const auto ps = poses(256, 2);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(snap_orientation(ps[i++ % 256]));
}
BENCHMARK(BM_SnapOrientation);

void BM_ApplyAction(benchmark::State& state) {
  Pose p = snap_orientation(euler_compose({-90, 0, 0}, {0, 0, 1.5}));
  benchmark::DoNotOptimize(apply_action(p, Action::TurnLeft));  // builds the orientation table outside the timing
  std::size_t i = 0;
  for (auto _ : state) {
    p = apply_action(p, kAllActions[i++ % kActionCount]);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_ApplyAction);

void BM_Plan(benchmark::State& state) {
  const auto ps = poses(256, 3);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan_actions(snap_orientation(ps[i % 256]), ps[(i + 7) % 256]));
    ++i;
  }
}
BENCHMARK(BM_Plan);

void BM_Render(benchmark::State& state) {
  ProceduralSpec spec;
  spec.vertex_count = static_cast<std::size_t>(state.range(0));
  const Scene scene = procedural_scene(1, spec);
  const CameraIntrinsics intr{static_cast<int>(state.range(1)), static_cast<int>(state.range(1)) * 3 / 4, 60.0};
  const Eigen::Vector3d c = scene.bounds().center();
  const Pose cam = euler_compose({-90, 30, 0}, {c.x(), c.y(), 1.5});
  for (auto _ : state) benchmark::DoNotOptimize(render_view(scene, cam, intr));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Render)->Args({20000, 128})->Args({60000, 256})->Args({60000, 512})->Unit(benchmark::kMillisecond);

GraphTrajectory walk(std::mt19937_64& rng, std::size_t states) {
  GraphTrajectory t;
  t.scene_id = "s";
  std::uniform_int_distribution<int> cell(-6, 6);
  t.states.push_back({snap_orientation(euler_compose({-90, 30.0 * cell(rng), 0},
                                                     {0.5 * cell(rng), 0.5 * cell(rng), 1.5})),
                      {},
                      true});
  for (std::size_t i = 1; i < states; ++i) {
    const ActionSequence a{kAllActions[rng() % kActionCount]};
    t.states.push_back({execute(t.states.back().pose, a), {}, true});
    t.actions.push_back(a);
  }
  return t;
}

void BM_GraphIngest(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::vector<GraphTrajectory> trajs;
  for (int i = 0; i < 50; ++i) trajs.push_back(walk(rng, 12));
  for (auto _ : state) {
    ViewGraph g;
    for (const auto& t : trajs) g.ingest(t);
    benchmark::DoNotOptimize(g.nodes().size());
  }
}
BENCHMARK(BM_GraphIngest)->Unit(benchmark::kMillisecond);

void BM_Distill(benchmark::State& state) {
  std::mt19937_64 rng(5);
  ViewGraph g;
  for (int i = 0; i < 60; ++i) g.ingest(walk(rng, 12));
  DistillConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(run_distill(g, cfg, 1).records.size());
}
BENCHMARK(BM_Distill)->Unit(benchmark::kMillisecond);

void BM_Spearman(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> u(0, 50);  // plenty of ties
  std::vector<double> x(static_cast<std::size_t>(state.range(0))), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    y[i] = x[i] + u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(spearman(x, y));
}
BENCHMARK(BM_Spearman)->Arg(1000)->Arg(100000);

}  // namespace
}  // namespace viewplan

BENCHMARK_MAIN();
