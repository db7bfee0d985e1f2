#include "fly0/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "fly0/error.hpp"
#include "fly0/random.hpp"

namespace fly0 {

std::string to_string(NavStatus status) {
  switch (status) {
    case NavStatus::Running: return "Running";
    case NavStatus::Succeeded: return "Succeeded";
    case NavStatus::Failed: return "Failed";
  }
  return "Unknown";
}

std::string to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::None: return "None";
    case FailureReason::Collision: return "Collision";
    case FailureReason::GroundingFailed: return "GroundingFailed";
    case FailureReason::Timeout: return "Timeout";
    case FailureReason::MissedGoal: return "MissedGoal";
  }
  return "Unknown";
}

void NavigatorConfig::validate() const {
  planner.validate();
  grounding.validate();
  map.validate();
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be > 0");
  };
  positive(tick, "tick");
  positive(time_limit, "time_limit");
  positive(grounding_timeout, "grounding_timeout");
  positive(arrival_radius, "arrival_radius");
  positive(camera_range, "camera_range");
  positive(lidar_range, "lidar_range");
  positive(lidar_period, "lidar_period");
  positive(fixed_range_guess, "fixed_range_guess");
  positive(reacquire_period, "reacquire_period");
  if (edge_radius < 0 || !(edge_tolerance > 0.0))
    throw Error(ErrorCode::InvalidArgument, "edge_radius must be >= 0 and edge_tolerance > 0");
  if (goal_jump_gate < 0.0) throw Error(ErrorCode::InvalidArgument, "goal_jump_gate must be >= 0");
  if (goal_clearance < 0.0) throw Error(ErrorCode::InvalidArgument, "goal_clearance must be >= 0");
  if (collision_radius < 0.0) throw Error(ErrorCode::InvalidArgument, "collision_radius must be >= 0");
  if (depth_noise_eta < 0.0) throw Error(ErrorCode::InvalidArgument, "depth_noise_eta must be >= 0");
  if (map_slide_threshold < 0.0) throw Error(ErrorCode::InvalidArgument, "map_slide_threshold must be >= 0");
  if (lidar_azimuth < 1 || lidar_elevation < 1) throw Error(ErrorCode::InvalidArgument, "lidar needs rays");
}

Point3 lift_target(const PixelTarget& pixel, const DepthMap& depth, const CameraIntrinsics& intrinsics,
                   const Pose& camera_extrinsics, const Pose& body_pose) {
  if (!intrinsics.contains(pixel)) throw Error(ErrorCode::PixelOutOfBounds, "pixel outside the image");
  if (depth.width != intrinsics.width || depth.height != intrinsics.height)
    throw Error(ErrorCode::InvalidArgument, "depth map does not match the intrinsics");
  const int u = std::clamp(static_cast<int>(std::lround(pixel.x)), 0, depth.width - 1);
  const int v = std::clamp(static_cast<int>(std::lround(pixel.y)), 0, depth.height - 1);

  double d = depth.at(u, v);
  if (!(d > 0.0) || !std::isfinite(d)) {
    std::vector<double> patch;
    for (int y = v - 1; y <= v + 1; ++y)
      for (int x = u - 1; x <= u + 1; ++x) {
        if (x < 0 || y < 0 || x >= depth.width || y >= depth.height) continue;
        const double s = depth.at(x, y);
        if (s > 0.0 && std::isfinite(s)) patch.push_back(s);
      }
    if (patch.empty()) throw Error(ErrorCode::DepthUnavailable, "no valid depth around the target pixel");
    std::sort(patch.begin(), patch.end());
    const std::size_t n = patch.size();
    d = n % 2 == 1 ? patch[n / 2] : 0.5 * (patch[n / 2 - 1] + patch[n / 2]);
  }
  return sensor_to_world(back_project(pixel, d, intrinsics), camera_extrinsics, body_pose);
}

Point3 lift_target_fixed_range(const PixelTarget& pixel, double range, const CameraIntrinsics& intrinsics,
                               const Pose& camera_extrinsics, const Pose& body_pose) {
  return sensor_to_world(back_project(pixel, range, intrinsics), camera_extrinsics, body_pose);
}

bool depth_discontinuity(const PixelTarget& pixel, const DepthMap& depth, int radius, double tolerance) {
  const int u = std::clamp(static_cast<int>(std::lround(pixel.x)), 0, depth.width - 1);
  const int v = std::clamp(static_cast<int>(std::lround(pixel.y)), 0, depth.height - 1);
  const double centre = depth.at(u, v);
  if (!(centre > 0.0)) return true;
  int outliers = 0;
  for (int y = v - radius; y <= v + radius; ++y)
    for (int x = u - radius; x <= u + radius; ++x) {
      if (x < 0 || y < 0 || x >= depth.width || y >= depth.height) continue;
      const double d = depth.at(x, y);
      if (!(d > 0.0) || std::abs(d - centre) > tolerance * centre) ++outliers;
    }
  return outliers >= 2;
}

Eigen::Vector3d standoff_goal(const OccupancyMap& map, const Eigen::Vector3d& origin, const Eigen::Vector3d& goal,
                              double clearance) {
  if (map.query_distance(goal).distance >= clearance) return goal;
  const double len = (origin - goal).norm();
  const double step = 0.5 * map.resolution();
  for (double s = step; s < len; s += step) {
    const Eigen::Vector3d p = goal + (origin - goal) * (s / len);
    if (map.query_distance(p).distance >= clearance) return p;
  }
  return goal;
}

void write_tick_trace_csv(std::ostream& out, const std::vector<TickRow>& rows) {
  out << "time,x,y,z,goal_x,goal_y,goal_z,J,status\n";
  for (const auto& r : rows) {
    out << r.time << ',' << r.position.x() << ',' << r.position.y() << ',' << r.position.z() << ',';
    if (r.goal)
      out << r.goal->x() << ',' << r.goal->y() << ',' << r.goal->z() << ',';
    else
      out << ",,,";
    if (std::isfinite(r.cost)) out << r.cost;
    out << ',' << to_string(r.status) << '\n';
  }
}

namespace {

constexpr std::uint64_t kDepthNoiseStream = 0x6465707468ull;

// Speed and acceleration norms over 200+ uniform samples of the trajectory.
std::pair<double, double> dense_dynamics(const BSplineTrajectory& traj) {
  const BSplineTrajectory vel = traj.derivative(1);
  const BSplineTrajectory acc = traj.derivative(2);
  const int n = std::max(200, static_cast<int>(traj.size()) * 10);
  double vmax = 0.0, amax = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = traj.start_time() + traj.duration() * static_cast<double>(i) / n;
    vmax = std::max(vmax, vel.evaluate(t).norm());
    amax = std::max(amax, acc.evaluate(t).norm());
  }
  return {vmax, amax};
}

double trajectory_clearance(const World& world, const BSplineTrajectory& traj) {
  const int n = std::max(200, static_cast<int>(traj.size()) * 10);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i)
    best = std::min(best, world.clearance(traj.evaluate(traj.start_time() + traj.duration() * i / n)));
  return best;
}

}  // namespace

Navigator::Navigator(const Scenario& scenario, Grounder& grounder, NavigatorConfig config, std::uint64_t seed)
    : scenario_(scenario),
      grounder_(grounder),
      config_(std::move(config)),
      seed_(seed),
      visual_(scenario.visual_world()),
      planner_(config_.planner),
      state_(scenario.start, OccupancyMap(config_.map, scenario.start.position())) {
  config_.validate();
  scenario.validate();
  state_.uav.time = 0.0;
}

void Navigator::ground() {
  const double now = state_.uav.time;
  if (!config_.regrounding && state_.goal_estimate) return;
  if (state_.pending) return;  // still waiting for the previous answer
  const double period = state_.goal_estimate ? config_.grounding.period : config_.reacquire_period;
  if (state_.last_grounding && now - *state_.last_grounding < period - 1e-9) return;

  const Pose camera_pose = state_.uav.pose * scenario_.camera_extrinsics;
  const std::uint64_t query = static_cast<std::uint64_t>(state_.groundings);
  CameraView view = render_view(visual_, camera_pose, scenario_.camera, config_.camera_range, grounder_.needs_image());
  if (config_.depth_noise_eta > 0.0)
    apply_depth_noise(view.depth, config_.depth_noise_eta, stream_seed(seed_ ^ kDepthNoiseStream, query));

  Observation obs;
  obs.width = scenario_.camera.width;
  obs.height = scenario_.camera.height;
  obs.camera_pose = camera_pose;
  obs.query_index = query;
  if (grounder_.needs_image()) obs.image = std::make_shared<const Image>(std::move(view.rgb));

  GroundingResult result;
  try {
    result = grounder_.ground(obs, scenario_.instruction);
  } catch (const Error&) {
    result = GroundingResult::absent();  // transport or parse failure counts as no answer
  }
  ++state_.groundings;
  state_.last_grounding = now;

  std::optional<Eigen::Vector3d> goal;
  if (result.found() && result.pixel) {
    try {
      if (config_.use_depth && config_.edge_radius > 0 &&
          depth_discontinuity(*result.pixel, view.depth, config_.edge_radius, config_.edge_tolerance))
        throw Error(ErrorCode::DepthUnavailable, "target pixel on a depth edge");
      const Point3 g = config_.use_depth
                           ? lift_target(*result.pixel, view.depth, scenario_.camera, scenario_.camera_extrinsics,
                                         state_.uav.pose)
                           : lift_target_fixed_range(*result.pixel, config_.fixed_range_guess, scenario_.camera,
                                                     scenario_.camera_extrinsics, state_.uav.pose);
      goal = g.xyz;
    } catch (const Error&) {
      // No usable depth: keep whatever goal we already have.
    }
  }
  state_.pending = NavigatorState::Pending{now + config_.grounding.latency_model, goal, camera_pose.translation()};
}

bool Navigator::update_map() {
  const double now = state_.uav.time;
  OccupancyMap& map = state_.map;
  bool changed = false;
  if (!state_.last_lidar || now - *state_.last_lidar >= config_.lidar_period - 1e-9) {
    state_.last_lidar = now;
    if ((state_.uav.position() - map.center()).norm() > config_.map_slide_threshold)
      changed |= map.slide_window(state_.uav.position());
    PointCloud cloud = sample_lidar(scenario_.world, state_.uav.pose, config_.lidar_azimuth, config_.lidar_elevation,
                                    config_.lidar_range, scenario_.lidar_extrinsics);
    PointCloud world_cloud{{}, Frame::World};
    world_cloud.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points)
      world_cloud.points.push_back(
          sensor_to_world(Point3(p, Frame::Sensor), scenario_.lidar_extrinsics, state_.uav.pose).xyz);
    changed |= map.insert_cloud(world_cloud) > 0;
  }
  if (map.stale()) map.recompute_distance_field();
  return changed;
}

void Navigator::replan() {
  const double now = state_.uav.time;
  PlanRequest req;
  req.time = now;
  req.position = state_.uav.position();
  req.goal = *state_.goal_estimate;
  if (config_.goal_clearance > 0.0)
    req.goal = standoff_goal(state_.map, state_.goal_origin, req.goal, config_.goal_clearance);
  state_.plan_goal = req.goal;
  if (state_.trajectory && now < state_.trajectory->end_time()) {
    const BSplineTrajectory& tr = *state_.trajectory;
    const double t = std::max(now, tr.start_time());
    req.position = tr.evaluate(t);
    req.velocity = tr.derivative(1).evaluate(t);
    req.acceleration = tr.derivative(2).evaluate(t);
    req.previous = &tr;
  }
  PlanResult plan = planner_.plan(req, state_.map);
  ++state_.replans;
  state_.replanned = true;
  state_.last_cost = plan.report.total;
  if (config_.trace) state_.optimizer_trace = plan.trace;
  PlanAudit& audit = state_.audit;
  if (!plan.monotone) audit.monotone = false;

  const bool accept = plan.feasible || !config_.planner.optimize;
  if (!accept) {
    ++audit.rejected;
    if (state_.trajectory && now < state_.trajectory->end_time()) return;
    // Nothing to follow: hold position.
    const Eigen::Vector3d p = state_.uav.position();
    state_.trajectory = BSplineTrajectory({p, p, p, p}, config_.planner.knot_interval, now);
    return;
  }
  ++audit.accepted;
  if (plan.used_guide) ++audit.guided;
  if (config_.planner.optimize) {
    const auto [v, a] = dense_dynamics(plan.trajectory);
    audit.max_dense_speed = std::max(audit.max_dense_speed, v);
    audit.max_dense_accel = std::max(audit.max_dense_accel, a);
  }
  state_.trajectory = std::move(plan.trajectory);
}

void Navigator::finish(NavStatus status, FailureReason reason) {
  state_.status = status;
  state_.reason = reason;
}

void Navigator::judge() {
  const double now = state_.uav.time;
  const Eigen::Vector3d p = state_.uav.position();
  const double clearance = scenario_.world.clearance(p);
  state_.audit.min_flown_clearance = std::min(state_.audit.min_flown_clearance, clearance);
  if (clearance <= config_.collision_radius) {
    finish(NavStatus::Failed, FailureReason::Collision);
    return;
  }
  // With re-grounding on, an unconfirmed or contested estimate ends the run
  // only after one more answer, asked from the end of the trajectory.
  const bool confirmed = !config_.regrounding || config_.goal_jump_gate <= 0.0 ||
                         (state_.goal_confirmations >= 2 && !state_.goal_candidate) ||
                         (state_.trajectory && !state_.pending && state_.last_grounding &&
                          *state_.last_grounding >= state_.trajectory->end_time() - 1e-9);
  if (confirmed && state_.plan_goal && state_.trajectory && now >= state_.trajectory->end_time() &&
      (p - *state_.plan_goal).norm() < config_.arrival_radius) {
    const double truth = (p - scenario_.goal).norm();
    if (truth < scenario_.delta)
      finish(NavStatus::Succeeded, FailureReason::None);
    else
      finish(NavStatus::Failed, FailureReason::MissedGoal);
    return;
  }
  if (!state_.goal_estimate && now >= config_.grounding_timeout) {
    finish(NavStatus::Failed, FailureReason::GroundingFailed);
    return;
  }
  if (now >= config_.time_limit) finish(NavStatus::Failed, FailureReason::Timeout);
}

bool Navigator::accept_answer(const NavigatorState::Pending& answer) {
  if (!answer.goal) return false;
  const Eigen::Vector3d g = *answer.goal;
  const double gate = config_.goal_jump_gate;
  const auto near = [&](const std::optional<Eigen::Vector3d>& ref) { return ref && (g - *ref).norm() <= gate; };
  auto adopt = [&](int confirmations) {
    const bool changed = !state_.goal_estimate || (*state_.goal_estimate - g).norm() > 0.0;
    state_.goal_estimate = g;
    state_.goal_origin = answer.origin;
    state_.goal_confirmations = confirmations;
    state_.goal_candidate.reset();
    return changed;
  };
  if (!state_.goal_estimate) return adopt(1);
  if (gate <= 0.0 || near(state_.goal_estimate)) return adopt(state_.goal_confirmations + 1);
  // A far answer is held until the next one sides with it or with the estimate.
  if (near(state_.goal_candidate)) return adopt(2);
  state_.goal_candidate = g;
  return false;
}

void Navigator::step() {
  if (!running()) throw Error(ErrorCode::InvalidArgument, "navigator is not running");
  state_.replanned = false;
  const double now = state_.uav.time;

  // (1) grounding, applied once its modeled latency has elapsed
  ground();
  bool goal_changed = false;
  if (state_.pending && now >= state_.pending->ready_time - 1e-12) {
    goal_changed = accept_answer(*state_.pending);
    state_.pending.reset();
  }

  // (2) mapping
  const bool map_changed = update_map();

  // (3) replanning on either trigger
  if (state_.goal_estimate && (map_changed || goal_changed || !state_.trajectory)) replan();

  // (4) playback
  if (state_.trajectory && state_.trajectory->duration() > 0.0) {
    state_.uav = advance(state_.uav, *state_.trajectory, config_.tick, config_.planner.weights.v_max);
  } else {
    state_.uav.velocity.setZero();
    state_.uav.time += config_.tick;
  }

  // (5) status
  judge();

  if (config_.trace)
    trace_.push_back({state_.uav.time, state_.uav.position(), state_.goal_estimate, state_.last_cost, state_.status});
}

EpisodeResult Navigator::result() const {
  EpisodeResult r;
  r.final_position = state_.uav.position();
  r.ne = (r.final_position - scenario_.goal).norm();
  r.collided = state_.reason == FailureReason::Collision;
  r.success = state_.status == NavStatus::Succeeded && r.ne < scenario_.delta && !r.collided;
  r.flight_time = state_.uav.time;
  r.time = state_.uav.time + config_.grounding.latency_model * state_.groundings;
  r.groundings = state_.groundings;
  r.replans = state_.replans;
  r.reason = state_.status == NavStatus::Running ? FailureReason::Timeout : state_.reason;
  r.goal_estimate = state_.goal_estimate;
  r.final_trajectory = state_.trajectory;
  r.audit = state_.audit;
  if (state_.trajectory) r.audit.min_final_clearance = trajectory_clearance(scenario_.world, *state_.trajectory);
  r.trace = trace_;
  r.optimizer_trace = state_.optimizer_trace;
  return r;
}

EpisodeResult run_episode(const Scenario& scenario, const NavigatorConfig& config, Grounder& grounder,
                          std::uint64_t seed) {
  Navigator nav(scenario, grounder, config, seed);
  while (nav.running()) nav.step();
  return nav.result();
}

std::unique_ptr<Grounder> make_mock_grounder(const Scenario& scenario, const NavigatorConfig& config,
                                             std::uint64_t seed) {
  return std::make_unique<MockGrounder>(scenario.world, scenario.goal, scenario.camera,
                                        config.grounding.pixel_noise_sigma, seed, config.grounding.latency_model);
}

EpisodeResult run_episode(const Scenario& scenario, const NavigatorConfig& config, std::uint64_t seed) {
  auto mock = make_mock_grounder(scenario, config, seed);
  return run_episode(scenario, config, *mock, seed);
}

}  // namespace fly0
