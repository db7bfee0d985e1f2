#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "fly0/geometry.hpp"
#include "fly0/simulator.hpp"

namespace fly0 {

/// One navigation task: world, start state, hidden ground-truth goal,
/// instruction and success threshold, plus the sensor rig.
struct Scenario {
  World world;
  UavState start;
  Eigen::Vector3d goal{Eigen::Vector3d::Zero()};
  std::string instruction{"fly to the blue marker"};
  double delta{5.0};
  CameraIntrinsics camera;
  Pose camera_extrinsics{default_camera_extrinsics()};  // camera-to-body
  Pose lidar_extrinsics;                                // lidar-to-body
  /// Radius of the visible (non-colliding) marker drawn at the goal so the
  /// depth camera has a surface to return at the goal pixel.
  double target_radius{0.3};
  std::uint64_t seed{0};

  /// The world as the camera sees it: obstacles plus the goal marker.
  World visual_world() const;
  /// Throws InvalidArgument on delta <= 0 or a start in collision.
  void validate(double collision_radius = 0.0) const;
};

struct ScenarioParams {
  int min_obstacles{5};
  int max_obstacles{15};
  double world_size{20.0};
  /// Minimum clearance of start and goal from every obstacle; the generator
  /// enforces at least max(1.0, 2 * d_safe).
  double min_clearance{1.0};
  double d_safe{0.5};
  double min_goal_distance{10.0};
  double max_goal_distance{16.0};
  /// Fraction of obstacles placed so they graze the sight cone from the
  /// start to the goal without entering it.
  double corridor_fraction{0.4};
  /// Radius at the goal of that cone (apex at the start), kept obstacle-free
  /// so the target is in clear view at takeoff.
  double sight_radius{0.8};
  double max_elevation_deg{25.0};
  int max_attempts{2000};

  void validate() const;
};

/// Seeded, reproducible scenario. Throws Unsatisfiable after bounded
/// rejection sampling.
Scenario gen_random_scenario(std::uint64_t seed, const ScenarioParams& params = {});

}  // namespace fly0
