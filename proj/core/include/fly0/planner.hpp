#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fly0/bspline.hpp"
#include "fly0/mapping.hpp"
#include "fly0/optimizer.hpp"

namespace fly0 {

struct PlannerConfig {
  CostWeights weights;
  OptimizeOptions options{.method = DescentMethod::LBFGS};
  double knot_interval{0.2};  // seconds between knots
  double cruise_speed{2.0};    // m/s, half of v_max
  double ramp_accel{1.0};      // m/s^2 used to shape the initial speed profile
  int max_attempts{5};         // each retry slows the profile by slowdown_factor
  double slowdown_factor{1.3};
  /// A* guide clearance; the guide is used when the warm start passes closer
  /// than guide_trigger to an occupied voxel.
  double guide_clearance{1.0};
  double guide_trigger{0.25};
  int guide_node_budget{400000};
  int max_control_points{120};
  bool optimize{true};  // false: fly the straight-line initialization as is

  void validate() const;
};

/// Kinematic state the new trajectory must start from.
struct PlanRequest {
  double time{0.0};
  Eigen::Vector3d position{Eigen::Vector3d::Zero()};
  Eigen::Vector3d velocity{Eigen::Vector3d::Zero()};
  Eigen::Vector3d acceleration{Eigen::Vector3d::Zero()};
  Eigen::Vector3d goal{Eigen::Vector3d::Zero()};
  const BSplineTrajectory* previous{nullptr};  // warm start when non-null
};

struct PlanResult {
  explicit PlanResult(BSplineTrajectory traj) : trajectory(std::move(traj)) {}

  BSplineTrajectory trajectory;
  bool feasible{false};     // velocity/acceleration control points within limits
  bool clear{false};        // dense map clearance >= d_safe - resolution
  bool used_guide{false};   // A* guide replaced the warm start
  bool warm_started{false};
  int attempts{0};
  int iterations{0};
  bool monotone{true};      // accepted cost sequence never increased
  CostReport report;
  std::vector<TraceRow> trace;  // optimizer iterations of the returned attempt
  double max_speed{0.0};
  double max_accel{0.0};
  double min_map_clearance{0.0};
};

/// Max velocity and acceleration norms over the derivative control points;
/// by the convex hull property these bound every sample of the curve.
struct DynamicsBound {
  double max_speed{0.0};
  double max_accel{0.0};
};
DynamicsBound dynamics_bound(const BSplineTrajectory& traj);

/// Control points P0..P2 of a uniform cubic whose curve starts at `p` with
/// velocity `v` and acceleration `a`.
std::vector<Eigen::Vector3d> state_block(const Eigen::Vector3d& p, const Eigen::Vector3d& v,
                                         const Eigen::Vector3d& a, double dt);

/// 26-connected weighted A* over map voxels whose distance is at least
/// `clearance` (relaxed within 1 m of the endpoints). Returns a pruned
/// polyline from start to goal, or nothing when the budget runs out.
std::optional<std::vector<Eigen::Vector3d>> search_guide(const OccupancyMap& map, const Eigen::Vector3d& start,
                                                         const Eigen::Vector3d& goal, double clearance,
                                                         int node_budget);

/// Receding-horizon trajectory generator around optimize().
class Planner {
 public:
  explicit Planner(PlannerConfig config = {});

  const PlannerConfig& config() const { return config_; }

  /// Builds boundary blocks from the request, seeds the interior from the
  /// previous trajectory (or a straight line / A* guide), optimizes, and
  /// retries with a slower profile while the result breaks v_max/a_max.
  PlanResult plan(const PlanRequest& request, const OccupancyMap& map) const;

 private:
  BSplineTrajectory seed_trajectory(const PlanRequest& request, const std::vector<Eigen::Vector3d>& guide,
                                    double speed_scale) const;

  PlannerConfig config_;
};

}  // namespace fly0
