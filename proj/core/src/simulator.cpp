#include "fly0/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fly0/error.hpp"
#include "fly0/scenario.hpp"

namespace fly0 {

namespace {

constexpr double kMinT = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::optional<RayHit> ray_box(const Box& box, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double max_t) {
  const Eigen::Vector3d lo = box.center - 0.5 * box.size;
  const Eigen::Vector3d hi = box.center + 0.5 * box.size;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = 0, far_axis = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-300) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t1 = (lo[a] - o[a]) / d[a];
    double t2 = (hi[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > t_near) {
      t_near = t1;
      near_axis = a;
    }
    if (t2 < t_far) {
      t_far = t2;
      far_axis = a;
    }
  }
  if (t_near > t_far) return std::nullopt;
  RayHit hit;
  if (t_near > kMinT) {
    hit.t = t_near;
    hit.normal = Eigen::Vector3d::Zero();
    hit.normal[near_axis] = d[near_axis] > 0 ? -1.0 : 1.0;
  } else if (t_far > kMinT) {
    hit.t = t_far;
    hit.normal = Eigen::Vector3d::Zero();
    hit.normal[far_axis] = d[far_axis] > 0 ? 1.0 : -1.0;
  } else {
    return std::nullopt;
  }
  if (hit.t > max_t) return std::nullopt;
  return hit;
}

std::optional<RayHit> ray_sphere(const Sphere& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double max_t) {
  const Eigen::Vector3d oc = o - s.center;
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  double t = (-b - root) / a;
  if (t <= kMinT) t = (-b + root) / a;
  if (t <= kMinT || t > max_t) return std::nullopt;
  RayHit hit;
  hit.t = t;
  hit.normal = (o + t * d - s.center) / s.radius;
  return hit;
}

std::uint8_t shade(std::uint8_t c, double k) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(c * k), 0L, 255L));
}

}  // namespace

double Obstacle::signed_distance(const Eigen::Vector3d& p) const {
  return std::visit(overloaded{
                        [&](const Box& b) {
                          const Eigen::Vector3d q = (p - b.center).cwiseAbs() - 0.5 * b.size;
                          const double outside = q.cwiseMax(0.0).norm();
                          const double inside = std::min(q.maxCoeff(), 0.0);
                          return outside + inside;
                        },
                        [&](const Sphere& s) { return (p - s.center).norm() - s.radius; },
                    },
                    shape);
}

Eigen::Vector3d Obstacle::aabb_min() const {
  return std::visit(overloaded{
                        [](const Box& b) -> Eigen::Vector3d { return b.center - 0.5 * b.size; },
                        [](const Sphere& s) -> Eigen::Vector3d {
                          return s.center - Eigen::Vector3d::Constant(s.radius);
                        },
                    },
                    shape);
}

Eigen::Vector3d Obstacle::aabb_max() const {
  return std::visit(overloaded{
                        [](const Box& b) -> Eigen::Vector3d { return b.center + 0.5 * b.size; },
                        [](const Sphere& s) -> Eigen::Vector3d {
                          return s.center + Eigen::Vector3d::Constant(s.radius);
                        },
                    },
                    shape);
}

World::World(std::vector<Obstacle> obstacles, Bounds bounds) : obstacles_(std::move(obstacles)), bounds_(bounds) {
  if (!bounds_.min.allFinite() || !bounds_.max.allFinite() || (bounds_.max.array() < bounds_.min.array()).any())
    throw Error(ErrorCode::InvalidArgument, "invalid world bounds");
  for (std::size_t i = 0; i < obstacles_.size(); ++i) {
    const auto& ob = obstacles_[i];
    const bool ok = std::visit(overloaded{
                                   [](const Box& b) {
                                     return b.center.allFinite() && b.size.allFinite() && (b.size.array() > 0).all();
                                   },
                                   [](const Sphere& s) {
                                     return s.center.allFinite() && std::isfinite(s.radius) && s.radius > 0;
                                   },
                               },
                               ob.shape);
    if (!ok) throw Error(ErrorCode::InvalidArgument, "obstacle " + std::to_string(i) + " is degenerate");
    if (!bounds_.contains(ob.aabb_min()) || !bounds_.contains(ob.aabb_max()))
      throw Error(ErrorCode::InvalidArgument, "obstacle " + std::to_string(i) + " leaves the world bounds");
  }
}

std::optional<RayHit> World::raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                                     double max_t) const {
  std::optional<RayHit> best;
  double limit = max_t;
  for (std::size_t i = 0; i < obstacles_.size(); ++i) {
    const auto hit = std::visit(overloaded{
                                    [&](const Box& b) { return ray_box(b, origin, direction, limit); },
                                    [&](const Sphere& s) { return ray_sphere(s, origin, direction, limit); },
                                },
                                obstacles_[i].shape);
    if (hit) {
      best = *hit;
      best->obstacle = i;
      limit = hit->t;
    }
  }
  return best;
}

double World::clearance(const Eigen::Vector3d& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ob : obstacles_) best = std::min(best, ob.signed_distance(p));
  return best;
}

CameraView render_view(const World& world, const Pose& camera_pose, const CameraIntrinsics& intrinsics,
                       double max_range, bool with_rgb) {
  intrinsics.validate();
  CameraView view;
  DepthMap& dm = view.depth;
  dm.width = intrinsics.width;
  dm.height = intrinsics.height;
  dm.max_range = max_range;
  dm.depth.assign(std::size_t(dm.width) * dm.height, DepthMap::kNoReturn);
  if (with_rgb) view.rgb = Image(dm.width, dm.height);

  const Eigen::Matrix3d& r = camera_pose.rotation();
  const Eigen::Vector3d& origin = camera_pose.translation();
  const Rgb sky{175, 205, 235};
  for (int v = 0; v < dm.height; ++v) {
    const double yn = (v - intrinsics.cy) / intrinsics.fy;
    for (int u = 0; u < dm.width; ++u) {
      const double xn = (u - intrinsics.cx) / intrinsics.fx;
      // camera-frame direction with unit z, so the ray parameter is depth
      const Eigen::Vector3d dir = r * Eigen::Vector3d(xn, yn, 1.0);
      const auto hit = world.raycast(origin, dir, max_range);
      if (hit) dm.depth[std::size_t(v) * dm.width + u] = hit->t;
      if (with_rgb) {
        std::uint8_t* px = view.rgb.pixel(u, v);
        if (hit) {
          const Rgb& c = world.obstacles()[hit->obstacle].color;
          const double lambert = std::abs(hit->normal.dot(dir.normalized()));
          const double k = 0.35 + 0.65 * lambert;
          px[0] = shade(c[0], k);
          px[1] = shade(c[1], k);
          px[2] = shade(c[2], k);
        } else {
          px[0] = sky[0];
          px[1] = sky[1];
          px[2] = sky[2];
        }
      }
    }
  }
  return view;
}

DepthMap render_depth(const World& world, const Pose& camera_pose, const CameraIntrinsics& intrinsics,
                      double max_range) {
  return render_view(world, camera_pose, intrinsics, max_range, false).depth;
}

void apply_depth_noise(DepthMap& depth, double eta, std::uint64_t seed) {
  if (eta <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& d : depth.depth) {
    if (d <= 0.0) continue;
    const double noisy = d * (1.0 + eta * gauss(rng));
    d = (noisy > 0.0 && noisy <= depth.max_range) ? noisy : DepthMap::kNoReturn;
  }
}

PointCloud sample_lidar(const World& world, const Pose& body_pose, int n_azimuth, int n_elevation, double max_range,
                        const Pose& lidar_extrinsics) {
  if (n_azimuth < 1 || n_elevation < 1) throw Error(ErrorCode::InvalidArgument, "lidar ray counts must be >= 1");
  const Pose sensor = pose_compose(body_pose, lidar_extrinsics);
  PointCloud cloud;
  cloud.frame = Frame::Sensor;
  for (int e = 0; e < n_elevation; ++e) {
    const double el = n_elevation == 1 ? 0.0 : -0.5 * std::numbers::pi + std::numbers::pi * e / (n_elevation - 1);
    for (int a = 0; a < n_azimuth; ++a) {
      const double az = 2.0 * std::numbers::pi * a / n_azimuth;
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto hit = world.raycast(sensor.translation(), sensor.rotation() * dir, max_range);
      if (hit) cloud.points.push_back(dir * hit->t);
    }
  }
  return cloud;
}

UavState advance(const UavState& state, const BSplineTrajectory& traj, double dt, double v_max) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be > 0");
  if (!(traj.duration() > 0.0)) throw Error(ErrorCode::TrajectoryDomainEmpty, "trajectory has an empty domain");
  const double new_time = state.time + dt;
  const double t = std::clamp(new_time, traj.start_time(), traj.end_time());
  const bool at_end = new_time >= traj.end_time();

  UavState next;
  next.time = new_time;
  const Eigen::Vector3d position = traj.evaluate(t);
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  if (!at_end) {
    velocity = traj.derivative(1).evaluate(t);
    const double speed = velocity.norm();
    if (speed > v_max) velocity *= v_max / speed;
  }
  next.velocity = velocity;
  double yaw = state.pose.yaw();
  if (velocity.head<2>().norm() > 0.1) yaw = std::atan2(velocity.y(), velocity.x());
  next.pose = Pose::from_yaw(yaw, position);
  return next;
}

bool check_collision(const World& world, const Eigen::Vector3d& p, double radius) {
  if (radius < 0.0) throw Error(ErrorCode::InvalidArgument, "radius must be >= 0");
  return world.clearance(p) <= radius;
}

// ---------------------------------------------------------------------------
// Scenario

World Scenario::visual_world() const {
  std::vector<Obstacle> obs = world.obstacles();
  obs.push_back(Obstacle{Sphere{goal, target_radius}, Rgb{30, 60, 220}});
  Bounds b = world.bounds();
  b.min = b.min.cwiseMin(goal - Eigen::Vector3d::Constant(target_radius));
  b.max = b.max.cwiseMax(goal + Eigen::Vector3d::Constant(target_radius));
  return {std::move(obs), b};
}

void Scenario::validate(double collision_radius) const {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be > 0");
  camera.validate();
  if (!goal.allFinite()) throw Error(ErrorCode::InvalidArgument, "goal is not finite");
  if (check_collision(world, start.position(), collision_radius))
    throw Error(ErrorCode::InvalidArgument, "start is in collision");
}

void ScenarioParams::validate() const {
  if (min_obstacles < 0 || max_obstacles < min_obstacles)
    throw Error(ErrorCode::InvalidArgument, "obstacle count range is empty");
  if (!(world_size > 4.0)) throw Error(ErrorCode::InvalidArgument, "world_size too small");
  if (!(min_goal_distance > 0.0) || max_goal_distance < min_goal_distance)
    throw Error(ErrorCode::InvalidArgument, "goal distance range is empty");
  if (max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "max_attempts must be >= 1");
  if (sight_radius < 0.0) throw Error(ErrorCode::InvalidArgument, "sight_radius must be >= 0");
}

namespace {

bool segment_clear(const World& world, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d d = b - a;
  return !world.raycast(a, d, 1.0).has_value();
}

// Smallest gap between the obstacle and the cone with apex a whose radius
// grows linearly to `radius` at b.
double cone_clearance(const Obstacle& ob, const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius) {
  double best = std::numeric_limits<double>::infinity();
  constexpr int kSamples = 200;
  for (int i = 0; i <= kSamples; ++i) {
    const double f = double(i) / kSamples;
    best = std::min(best, ob.signed_distance(a + (b - a) * f) - f * radius);
  }
  return best;
}

}  // namespace

Scenario gen_random_scenario(std::uint64_t seed, const ScenarioParams& params) {
  params.validate();
  const double clearance = std::max({params.min_clearance, 1.0, 2.0 * params.d_safe});
  const double size = params.world_size;
  const double margin = 1.5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double max_tan = std::tan(params.max_elevation_deg * std::numbers::pi / 180.0);

  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    Eigen::Vector3d start(uniform(margin, size - margin), uniform(margin, size - margin),
                          uniform(0.3 * size, 0.7 * size));
    Eigen::Vector3d goal(uniform(margin, size - margin), uniform(margin, size - margin),
                         uniform(0.3 * size, 0.7 * size));
    const Eigen::Vector3d diff = goal - start;
    const double dist = diff.norm();
    if (dist < params.min_goal_distance || dist > params.max_goal_distance) continue;
    if (std::abs(diff.z()) > max_tan * diff.head<2>().norm()) continue;

    const int count = std::uniform_int_distribution<int>(params.min_obstacles, params.max_obstacles)(rng);
    std::vector<Obstacle> obstacles;
    bool failed = false;
    for (int i = 0; i < count && !failed; ++i) {
      const bool corridor = unit(rng) < params.corridor_fraction;
      bool placed = false;
      for (int tries = 0; tries < 200 && !placed; ++tries) {
        Obstacle ob;
        const bool sphere = unit(rng) < 0.5;
        double extent = 0.0;
        if (sphere) {
          const double r = uniform(0.5, 1.5);
          ob.shape = Sphere{Eigen::Vector3d::Zero(), r};
          extent = r;
        } else {
          const Eigen::Vector3d s(uniform(0.8, 3.0), uniform(0.8, 3.0), uniform(0.8, 3.0));
          ob.shape = Box{Eigen::Vector3d::Zero(), s};
          extent = 0.5 * s.minCoeff();
        }
        Eigen::Vector3d center;
        if (corridor) {
          const double f = uniform(0.1, 0.75);
          Eigen::Vector3d side = diff.unitOrthogonal();
          side = Eigen::AngleAxisd(uniform(0.0, 2.0 * std::numbers::pi), diff.normalized()) * side;
          center = start + diff * f + side * (extent + f * params.sight_radius + uniform(0.02, 0.6));
        } else {
          center = Eigen::Vector3d(uniform(0.0, size), uniform(0.0, size), uniform(0.0, size));
        }
        std::visit([&](auto& s) { s.center = center; }, ob.shape);
        const Bounds bounds{Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(size)};
        if (!bounds.contains(ob.aabb_min()) || !bounds.contains(ob.aabb_max())) continue;
        if (ob.signed_distance(start) < clearance || ob.signed_distance(goal) < clearance) continue;
        const double gap = cone_clearance(ob, start, goal, params.sight_radius);
        if (corridor && !(gap > 0.02 && gap < 0.8)) continue;
        if (gap <= 0.02) continue;  // the target stays in clear view from the start
        obstacles.push_back(ob);
        placed = true;
      }
      failed = !placed;
    }
    if (failed) continue;

    Scenario sc;
    sc.world = World(std::move(obstacles), Bounds{Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(size)});
    if (!segment_clear(sc.world, start, goal)) continue;
    sc.start.pose = Pose::from_yaw(std::atan2(diff.y(), diff.x()), start);
    sc.start.time = 0.0;
    sc.goal = goal;
    sc.seed = seed;
    return sc;
  }
  throw Error(ErrorCode::Unsatisfiable, "no scenario after " + std::to_string(params.max_attempts) + " attempts");
}

}  // namespace fly0
