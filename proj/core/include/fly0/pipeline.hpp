#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <iosfwd>
#include <limits>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fly0/bspline.hpp"
#include "fly0/geometry.hpp"
#include "fly0/grounding.hpp"
#include "fly0/mapping.hpp"
#include "fly0/planner.hpp"
#include "fly0/scenario.hpp"
#include "fly0/simulator.hpp"

namespace fly0 {

enum class NavStatus { Running, Succeeded, Failed };
enum class FailureReason { None, Collision, GroundingFailed, Timeout, MissedGoal };

std::string to_string(NavStatus status);
std::string to_string(FailureReason reason);

struct NavigatorConfig {
  PlannerConfig planner;
  GroundingConfig grounding;
  MapConfig map;
  double tick{0.02};  // 50 Hz
  double time_limit{120.0};
  double grounding_timeout{10.0};
  double arrival_radius{1.0};
  double collision_radius{0.2};
  double camera_range{20.0};
  double depth_noise_eta{0.02};
  int lidar_azimuth{64};
  int lidar_elevation{16};
  double lidar_range{20.0};
  double lidar_period{0.1};
  double map_slide_threshold{2.0};  // re-centre the window after this much travel
  bool use_depth{true};             // false: lift at a fixed range instead of the depth map
  double fixed_range_guess{10.0};
  double reacquire_period{0.1};     // query interval while no goal is known
  int edge_radius{2};               // drop answers whose depth patch straddles an edge; 0 disables
  double edge_tolerance{0.2};       // relative depth step that counts as an edge
  double goal_jump_gate{3.0};       // larger jumps, and arrival, need a confirming answer; 0 disables
  double goal_clearance{0.6};       // plan to a point this far from mapped obstacles; 0 disables
  bool regrounding{true};           // false: stop querying after the first Found
  bool trace{false};

  void validate() const;
};

/// Pixel -> world goal: depth at the rounded pixel (3x3 median fallback),
/// back-projection, then camera extrinsics and body pose.
Point3 lift_target(const PixelTarget& pixel, const DepthMap& depth, const CameraIntrinsics& intrinsics,
                   const Pose& camera_extrinsics, const Pose& body_pose);

/// Same chain with a constant depth in place of the depth map lookup.
Point3 lift_target_fixed_range(const PixelTarget& pixel, double range, const CameraIntrinsics& intrinsics,
                               const Pose& camera_extrinsics, const Pose& body_pose);

/// True when the (2r+1)^2 depth patch around the rounded pixel has no return
/// at its centre, or at least two samples missing or off the centre depth by
/// more than `tolerance` (relative).
bool depth_discontinuity(const PixelTarget& pixel, const DepthMap& depth, int radius, double tolerance);

/// First point on the segment goal -> origin whose mapped clearance reaches
/// `clearance`, walked in half-voxel steps. Returns `goal` when it already
/// qualifies or no point on the segment does.
Eigen::Vector3d standoff_goal(const OccupancyMap& map, const Eigen::Vector3d& origin, const Eigen::Vector3d& goal,
                              double clearance);

struct TickRow {
  double time{0.0};
  Eigen::Vector3d position{Eigen::Vector3d::Zero()};
  std::optional<Eigen::Vector3d> goal;
  double cost{std::numeric_limits<double>::quiet_NaN()};
  NavStatus status{NavStatus::Running};
};

void write_tick_trace_csv(std::ostream& out, const std::vector<TickRow>& rows);

/// Plan-level statistics gathered for audits.
struct PlanAudit {
  int accepted{0};
  int rejected{0};
  int guided{0};
  bool monotone{true};           // every optimizer cost sequence non-increasing
  double max_dense_speed{0.0};   // over 200+ samples of every accepted trajectory
  double max_dense_accel{0.0};
  double min_flown_clearance{std::numeric_limits<double>::infinity()};  // true clearance at tick resolution
  double min_final_clearance{std::numeric_limits<double>::infinity()};  // along the last active trajectory
};

struct NavigatorState {
  NavigatorState(UavState start, OccupancyMap occupancy) : uav(std::move(start)), map(std::move(occupancy)) {}

  UavState uav;
  std::optional<Eigen::Vector3d> goal_estimate;
  Eigen::Vector3d goal_origin{Eigen::Vector3d::Zero()};  // camera position when the estimate was lifted
  std::optional<Eigen::Vector3d> goal_candidate;         // unconfirmed jump, see goal_jump_gate
  int goal_confirmations{0};                             // consecutive answers agreeing with the estimate
  std::optional<Eigen::Vector3d> plan_goal;              // estimate after the clearance standoff
  std::optional<BSplineTrajectory> trajectory;
  OccupancyMap map;
  NavStatus status{NavStatus::Running};
  FailureReason reason{FailureReason::None};
  std::optional<double> last_grounding;
  std::optional<double> last_lidar;
  int groundings{0};
  int replans{0};
  bool replanned{false};  // during the latest tick
  double last_cost{std::numeric_limits<double>::quiet_NaN()};

  // A grounding result waiting for its modeled latency to elapse.
  struct Pending {
    double ready_time{0.0};
    std::optional<Eigen::Vector3d> goal;
    Eigen::Vector3d origin{Eigen::Vector3d::Zero()};
  };
  std::optional<Pending> pending;
  std::vector<TraceRow> optimizer_trace;  // latest replan, when tracing
  PlanAudit audit;
};

struct EpisodeResult {
  bool success{false};
  double ne{0.0};
  double time{0.0};         // flight seconds + modeled grounding latency
  double flight_time{0.0};  // simulated seconds only
  bool collided{false};
  int groundings{0};
  int replans{0};
  FailureReason reason{FailureReason::None};
  Eigen::Vector3d final_position{Eigen::Vector3d::Zero()};
  std::optional<Eigen::Vector3d> goal_estimate;
  std::optional<BSplineTrajectory> final_trajectory;
  PlanAudit audit;
  std::vector<TickRow> trace;
  std::vector<TraceRow> optimizer_trace;
};

/// One 50 Hz control tick: ground, map, replan, advance, judge.
class Navigator {
 public:
  Navigator(const Scenario& scenario, Grounder& grounder, NavigatorConfig config, std::uint64_t seed);

  const NavigatorState& state() const { return state_; }
  const NavigatorConfig& config() const { return config_; }
  bool running() const { return state_.status == NavStatus::Running; }

  void step();

  EpisodeResult result() const;

 private:
  void ground();
  bool update_map();
  bool accept_answer(const NavigatorState::Pending& answer);  // true when the estimate moved
  void replan();
  void judge();
  void finish(NavStatus status, FailureReason reason);

  const Scenario& scenario_;
  Grounder& grounder_;
  NavigatorConfig config_;
  std::uint64_t seed_;
  World visual_;
  Planner planner_;
  NavigatorState state_;
  std::vector<TickRow> trace_;
};

EpisodeResult run_episode(const Scenario& scenario, const NavigatorConfig& config, Grounder& grounder,
                          std::uint64_t seed);

/// Builds the grounder for one episode.
using GrounderFactory = std::function<std::unique_ptr<Grounder>(const Scenario&, std::uint64_t seed)>;

/// Mock grounder with the configured pixel noise and latency.
std::unique_ptr<Grounder> make_mock_grounder(const Scenario& scenario, const NavigatorConfig& config,
                                             std::uint64_t seed);

/// Uses the mock grounder with the configured pixel noise and latency.
EpisodeResult run_episode(const Scenario& scenario, const NavigatorConfig& config, std::uint64_t seed);

}  // namespace fly0
