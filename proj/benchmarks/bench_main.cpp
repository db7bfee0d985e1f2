#include <benchmark/benchmark.h>

#include "fly0/optimizer.hpp"
#include "fly0/planner.hpp"
#include "fly0/scenario.hpp"
#include "fly0/simulator.hpp"

using namespace fly0;

namespace {

OccupancyMap scenario_map(const Scenario& sc) {
  OccupancyMap map(MapConfig{}, sc.start.position());
  PointCloud c = sample_lidar(sc.world, sc.start.pose, 360, 90, 20.0);
  for (auto& p : c.points) p = sc.start.pose.apply(p);
  c.frame = Frame::World;
  map.insert_cloud(c);
  map.recompute_distance_field();
  return map;
}

void BM_DistanceField(benchmark::State& state) {
  const Scenario sc = gen_random_scenario(7);
  OccupancyMap map = scenario_map(sc);
  for (auto _ : state) {
    map.recompute_distance_field();
    benchmark::DoNotOptimize(map.voxel_distance(Eigen::Vector3i::Zero()));
  }
  state.counters["voxels"] = static_cast<double>(MapConfig{}.window_voxels.prod());
}
BENCHMARK(BM_DistanceField)->Unit(benchmark::kMillisecond);

void BM_QueryDistance(benchmark::State& state) {
  const Scenario sc = gen_random_scenario(7);
  const OccupancyMap map = scenario_map(sc);
  Eigen::Vector3d p = sc.start.position();
  for (auto _ : state) {
    p.x() += 1e-3;
    benchmark::DoNotOptimize(map.query_distance(p));
  }
}
BENCHMARK(BM_QueryDistance);

void BM_TotalCost(benchmark::State& state) {
  const Scenario sc = gen_random_scenario(7);
  const OccupancyMap map = scenario_map(sc);
  const BSplineTrajectory t = init_straight_line(sc.start.position(), sc.goal, static_cast<int>(state.range(0)), 0.2);
  for (auto _ : state) benchmark::DoNotOptimize(total_cost(t, CostWeights{}, map));
}
BENCHMARK(BM_TotalCost)->Arg(30)->Arg(120);

void BM_ReplanCycle(benchmark::State& state) {
  const Scenario sc = gen_random_scenario(7);
  const OccupancyMap map = scenario_map(sc);
  Planner planner;
  PlanRequest req;
  req.position = sc.start.position();
  req.goal = req.position + (sc.goal - req.position).normalized() * 6.0;
  const PlanResult first = planner.plan(req, map);
  PlanRequest warm = req;
  warm.time = 0.2;
  warm.position = first.trajectory.evaluate(0.2);
  warm.velocity = first.trajectory.derivative(1).evaluate(0.2);
  warm.acceleration = first.trajectory.derivative(2).evaluate(0.2);
  warm.previous = &first.trajectory;
  std::size_t points = 0;
  for (auto _ : state) points = planner.plan(warm, map).trajectory.size();
  state.counters["control_points"] = static_cast<double>(points);
}
BENCHMARK(BM_ReplanCycle)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
