#include "fly0/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>

#include "fly0/error.hpp"

namespace fly0 {

void PlannerConfig::validate() const {
  weights.validate();
  options.validate();
  if (!(knot_interval > 0.0) || !(cruise_speed > 0.0) || !(ramp_accel > 0.0))
    throw Error(ErrorCode::InvalidArgument, "planner knot interval, cruise speed and ramp accel must be positive");
  if (max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "planner needs at least one attempt");
  if (!(slowdown_factor > 1.0)) throw Error(ErrorCode::InvalidArgument, "slowdown factor must exceed 1");
  if (guide_clearance < 0.0 || guide_trigger < 0.0 || guide_node_budget < 1)
    throw Error(ErrorCode::InvalidArgument, "invalid guide search settings");
  if (max_control_points < 8) throw Error(ErrorCode::InvalidArgument, "max_control_points must be at least 8");
}

DynamicsBound dynamics_bound(const BSplineTrajectory& traj) {
  DynamicsBound b;
  if (traj.degree() >= 1) {
    const BSplineTrajectory vel = traj.derivative(1);
    for (const auto& v : vel.control_points()) b.max_speed = std::max(b.max_speed, v.norm());
  }
  if (traj.degree() >= 2) {
    const BSplineTrajectory acc = traj.derivative(2);
    for (const auto& a : acc.control_points()) b.max_accel = std::max(b.max_accel, a.norm());
  }
  return b;
}

std::vector<Eigen::Vector3d> state_block(const Eigen::Vector3d& p, const Eigen::Vector3d& v,
                                         const Eigen::Vector3d& a, double dt) {
  const Eigen::Vector3d p1 = p - a * (dt * dt / 6.0);
  const Eigen::Vector3d bend = a * (dt * dt / 2.0);
  return {p1 - v * dt + bend, p1, p1 + v * dt + bend};
}

namespace {

double polyline_length(const std::vector<Eigen::Vector3d>& line) {
  double len = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) len += (line[i] - line[i - 1]).norm();
  return len;
}

// Point at arc length s along the polyline, clamped to its ends.
class ArcSampler {
 public:
  explicit ArcSampler(const std::vector<Eigen::Vector3d>& line) : line_(line), cumulative_(line.size(), 0.0) {
    for (std::size_t i = 1; i < line.size(); ++i)
      cumulative_[i] = cumulative_[i - 1] + (line[i] - line[i - 1]).norm();
  }
  double length() const { return cumulative_.back(); }
  Eigen::Vector3d at(double s) const {
    if (s <= 0.0) return line_.front();
    if (s >= length()) return line_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t j = static_cast<std::size_t>(it - cumulative_.begin());
    const double seg = cumulative_[j] - cumulative_[j - 1];
    const double f = seg > 0.0 ? (s - cumulative_[j - 1]) / seg : 0.0;
    return line_[j - 1] + f * (line_[j] - line_[j - 1]);
  }

 private:
  const std::vector<Eigen::Vector3d>& line_;
  std::vector<double> cumulative_;
};

double guide_min_distance(const OccupancyMap& map, const std::vector<Eigen::Vector3d>& guide, double skip) {
  const ArcSampler arc(guide);
  double best = std::numeric_limits<double>::infinity();
  for (double s = skip; s <= arc.length(); s += 0.1)
    best = std::min(best, map.voxel_distance(map.world_to_index(arc.at(s))));
  return best;
}

double dense_min_distance(const OccupancyMap& map, const BSplineTrajectory& traj) {
  // The first span is pinned to the current state, so it is not judged.
  const double t0 = traj.start_time() + traj.knot_interval();
  const double t1 = traj.end_time();
  double best = std::numeric_limits<double>::infinity();
  const int n = std::max(2, static_cast<int>(std::ceil((t1 - t0) / traj.knot_interval())) * 8);
  for (int i = 0; i <= n; ++i) {
    const double t = t0 + (t1 - t0) * static_cast<double>(i) / n;
    best = std::min(best, map.query_distance(traj.evaluate(t)).distance);
  }
  return best;
}

struct GridSearch {
  const OccupancyMap& map;
  Eigen::Vector3i origin;
  Eigen::Vector3i dims;
  Eigen::Vector3d start;
  Eigen::Vector3d goal;
  double clearance;

  bool inside(const Eigen::Vector3i& g) const {
    const Eigen::Vector3i l = g - origin;
    return (l.array() >= 0).all() && (l.array() < dims.array()).all();
  }
  std::size_t linear(const Eigen::Vector3i& g) const {
    const Eigen::Vector3i l = g - origin;
    return static_cast<std::size_t>(l.x()) +
           static_cast<std::size_t>(dims.x()) * (static_cast<std::size_t>(l.y()) +
                                                 static_cast<std::size_t>(dims.y()) * static_cast<std::size_t>(l.z()));
  }
  bool traversable(const Eigen::Vector3d& p) const {
    const Eigen::Vector3i g = map.world_to_index(p);
    if (!inside(g)) return false;
    const double d = map.voxel_distance(g);
    if (d >= clearance) return true;
    if (d <= 0.0) return false;
    return (p - start).norm() < 1.0 + clearance || (p - goal).norm() < 1.0;
  }
  bool segment_clear(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const {
    const double len = (b - a).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / (0.5 * map.resolution()))));
    for (int i = 0; i <= n; ++i)
      if (!traversable(a + (b - a) * (static_cast<double>(i) / n))) return false;
    return true;
  }
};

std::optional<std::vector<Eigen::Vector3d>> astar(const GridSearch& gs, int node_budget) {
  const OccupancyMap& map = gs.map;
  const Eigen::Vector3i s = map.world_to_index(gs.start);
  Eigen::Vector3d target = gs.goal;
  if (!gs.inside(map.world_to_index(target))) {
    // Clamp the target onto the window, one voxel inside its faces.
    const Eigen::Vector3d lo = map.index_to_center(gs.origin + Eigen::Vector3i::Ones());
    const Eigen::Vector3d hi = map.index_to_center(gs.origin + gs.dims - 2 * Eigen::Vector3i::Ones());
    target = target.cwiseMax(lo).cwiseMin(hi);
  }
  const Eigen::Vector3i t = map.world_to_index(target);
  if (!gs.inside(s) || !gs.inside(t)) return std::nullopt;

  const std::size_t total = static_cast<std::size_t>(gs.dims.prod());
  std::vector<float> cost(total, std::numeric_limits<float>::infinity());
  std::vector<std::int32_t> parent(total, -1);
  std::vector<std::uint8_t> closed(total, 0);

  auto heuristic = [&](const Eigen::Vector3i& g) { return 1.5 * (g - t).cast<double>().norm(); };
  using Entry = std::pair<double, std::int32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  auto unlinear = [&](std::int32_t idx) -> Eigen::Vector3i {
    const int nx = gs.dims.x(), ny = gs.dims.y();
    return Eigen::Vector3i(idx % nx, (idx / nx) % ny, idx / (nx * ny)) + gs.origin;
  };

  const std::size_t si = gs.linear(s);
  const std::size_t ti = gs.linear(t);
  cost[si] = 0.0f;
  open.emplace(heuristic(s), static_cast<std::int32_t>(si));
  int expanded = 0;
  bool found = false;
  while (!open.empty()) {
    const auto [f, idx] = open.top();
    open.pop();
    if (closed[static_cast<std::size_t>(idx)]) continue;
    closed[static_cast<std::size_t>(idx)] = 1;
    if (static_cast<std::size_t>(idx) == ti) {
      found = true;
      break;
    }
    if (++expanded > node_budget) break;
    const Eigen::Vector3i g = unlinear(idx);
    const double base = cost[static_cast<std::size_t>(idx)];
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Eigen::Vector3i n = g + Eigen::Vector3i(dx, dy, dz);
          if (!gs.inside(n)) continue;
          const std::size_t ni = gs.linear(n);
          if (closed[ni]) continue;
          if (ni != ti && !gs.traversable(map.index_to_center(n))) continue;
          const double c = base + std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz));
          if (c < cost[ni]) {
            cost[ni] = static_cast<float>(c);
            parent[ni] = idx;
            open.emplace(c + heuristic(n), static_cast<std::int32_t>(ni));
          }
        }
  }
  if (!found) return std::nullopt;

  std::vector<Eigen::Vector3d> cells;
  for (std::int32_t idx = static_cast<std::int32_t>(ti); idx >= 0; idx = parent[static_cast<std::size_t>(idx)]) {
    cells.push_back(map.index_to_center(unlinear(idx)));
    if (static_cast<std::size_t>(idx) == si) break;
  }
  std::reverse(cells.begin(), cells.end());
  cells.front() = gs.start;
  cells.back() = target;

  // Greedy line-of-sight pruning.
  std::vector<Eigen::Vector3d> path{cells.front()};
  std::size_t anchor = 0;
  while (anchor + 1 < cells.size()) {
    std::size_t next = anchor + 1;
    for (std::size_t j = cells.size() - 1; j > anchor + 1; --j) {
      if (gs.segment_clear(cells[anchor], cells[j])) {
        next = j;
        break;
      }
    }
    path.push_back(cells[next]);
    anchor = next;
  }
  if ((path.back() - gs.goal).norm() > 1e-9) path.push_back(gs.goal);
  return path;
}

}  // namespace

std::optional<std::vector<Eigen::Vector3d>> search_guide(const OccupancyMap& map, const Eigen::Vector3d& start,
                                                         const Eigen::Vector3d& goal, double clearance,
                                                         int node_budget) {
  GridSearch gs{map, map.window_origin(), map.config().window_voxels, start, goal, clearance};
  return astar(gs, node_budget);
}

Planner::Planner(PlannerConfig config) : config_(std::move(config)) { config_.validate(); }

BSplineTrajectory Planner::seed_trajectory(const PlanRequest& request, const std::vector<Eigen::Vector3d>& guide,
                                           double speed_scale) const {
  const double dt = config_.knot_interval;
  const double cruise = config_.cruise_speed * speed_scale;
  const double accel = config_.ramp_accel * speed_scale * speed_scale;
  std::vector<Eigen::Vector3d> pts = state_block(request.position, request.velocity, request.acceleration, dt);

  const ArcSampler arc(guide);
  const double length = arc.length();
  const std::size_t tail = 3;
  const std::size_t limit = static_cast<std::size_t>(config_.max_control_points) - tail;

  // Trapezoidal speed profile along the guide, integrated in small steps.
  double speed = std::min(request.velocity.norm(), cruise);
  double s = 0.0;
  double tau = 0.0;
  const double h = 0.005;
  const double min_speed = 0.05 * speed_scale;
  for (int i = 3; pts.size() < limit; ++i) {
    const double target_tau = (i - 1) * dt;
    while (tau < target_tau && s < length) {
      const double brake = std::sqrt(std::max(0.0, 2.0 * accel * (length - s)));
      speed = std::max(min_speed, std::min({cruise, speed + accel * h, brake}));
      s += speed * h;
      tau += h;
    }
    if (s >= length - 1e-3) break;
    pts.push_back(arc.at(s));
  }
  for (std::size_t i = 0; i < tail; ++i) pts.push_back(request.goal);
  return BSplineTrajectory(std::move(pts), dt, request.time);
}

PlanResult Planner::plan(const PlanRequest& request, const OccupancyMap& map) const {
  if (!request.position.allFinite() || !request.goal.allFinite())
    throw Error(ErrorCode::InvalidArgument, "plan request must be finite");

  // Warm start: the remaining part of the previous trajectory, bent so that
  // it ends at the new goal.
  std::vector<Eigen::Vector3d> guide;
  bool warm = false;
  if (request.previous && request.time < request.previous->end_time() - 1e-9 &&
      request.time >= request.previous->start_time()) {
    const BSplineTrajectory& prev = *request.previous;
    for (double t = request.time; t < prev.end_time(); t += 0.05) guide.push_back(prev.evaluate(t));
    guide.push_back(prev.evaluate(prev.end_time()));
    const Eigen::Vector3d shift = request.goal - guide.back();
    // Apply the shift with a ramp over arc length.
    std::vector<double> cumulative(guide.size(), 0.0);
    for (std::size_t i = 1; i < guide.size(); ++i) cumulative[i] = cumulative[i - 1] + (guide[i] - guide[i - 1]).norm();
    const double total = cumulative.back();
    for (std::size_t i = 0; i < guide.size(); ++i)
      guide[i] += shift * (total > 1e-9 ? cumulative[i] / total : 1.0);
    guide.front() = request.position;
    warm = true;
  } else {
    guide = {request.position, request.goal};
  }

  PlanResult best(BSplineTrajectory({request.position, request.position, request.position, request.position},
                                    config_.knot_interval, request.time));
  bool have_best = false;
  const CostWeights& w = config_.weights;
  const double clear_threshold = w.d_safe - map.resolution();

  bool guide_tried = false;
  auto try_guide = [&]() {
    guide_tried = true;
    auto path = search_guide(map, request.position, request.goal, config_.guide_clearance, config_.guide_node_budget);
    if (!path)
      path = search_guide(map, request.position, request.goal, std::max(1.2 * w.d_safe, 0.6 * config_.guide_clearance),
                          config_.guide_node_budget);
    if (path) guide = std::move(*path);
    return path.has_value();
  };

  bool used_guide = false;
  if (config_.optimize && polyline_length(guide) > 1e-6 &&
      guide_min_distance(map, guide, 0.3) < config_.guide_trigger)
    used_guide = try_guide();

  double scale = 1.0;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    const BSplineTrajectory seed = seed_trajectory(request, guide, scale);
    PlanResult r(seed);
    r.attempts = attempt;
    r.used_guide = used_guide;
    r.warm_started = warm && !used_guide;
    if (config_.optimize) {
      OptimizeOptions opts = config_.options;
      opts.record_trace = true;
      OptimizeResult o = optimize(seed, w, map, opts, true);
      for (std::size_t i = 1; i < o.trace.size(); ++i)
        if (o.trace[i].total > o.trace[i - 1].total) r.monotone = false;
      r.trajectory = std::move(o.trajectory);
      r.iterations = o.iterations;
      r.report = std::move(o.report);
      r.trace = std::move(o.trace);
    } else {
      r.report = total_cost(seed, w, map);
    }
    const DynamicsBound b = dynamics_bound(r.trajectory);
    r.max_speed = b.max_speed;
    r.max_accel = b.max_accel;
    r.feasible = b.max_speed <= w.v_max && b.max_accel <= w.a_max;
    r.min_map_clearance = dense_min_distance(map, r.trajectory);
    r.clear = r.min_map_clearance >= clear_threshold;

    const auto rank = [](const PlanResult& p) { return (p.feasible ? 2 : 0) + (p.clear ? 1 : 0); };
    if (!have_best || rank(r) > rank(best) ||
        (rank(r) == rank(best) && r.min_map_clearance > best.min_map_clearance)) {
      best = r;
      have_best = true;
    }
    if (r.feasible && (r.clear || !config_.optimize)) return r;
    if (!config_.optimize) {
      scale /= config_.slowdown_factor;
      continue;
    }
    if (!r.clear && !guide_tried) {
      if (try_guide()) {
        used_guide = true;
        continue;
      }
    }
    scale /= config_.slowdown_factor;
  }
  return best;
}

}  // namespace fly0
