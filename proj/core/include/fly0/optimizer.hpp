#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "fly0/bspline.hpp"
#include "fly0/mapping.hpp"

namespace fly0 {

struct CostWeights {
  double lambda_s{1.0};
  double lambda_c{10.0};
  double lambda_d{1.0};
  double d_safe{0.5};
  double v_max{4.0};
  double a_max{3.0};

  void validate() const;
};

enum class DescentMethod {
  GradientDescent,  // steepest descent
  LBFGS,            // limited-memory quasi-Newton direction, same line search
};

struct OptimizeOptions {
  DescentMethod method{DescentMethod::GradientDescent};
  int lbfgs_memory{8};
  int max_iterations{200};
  double gradient_tolerance{1e-6};
  double initial_step{1.0};
  double step_shrink{0.5};
  double armijo_c{1e-4};
  int max_backtracks{60};
  bool record_trace{false};

  void validate() const;
};

/// Value and gradient of one cost term. The gradient has one entry per
/// control point (pinned ones included).
struct TermResult {
  double value{0.0};
  std::vector<Eigen::Vector3d> gradient;
};

struct CostReport {
  double total{0.0};
  double smoothness{0.0};
  double collision{0.0};
  double feasibility{0.0};
  /// Gradient of `total` w.r.t. the free control points, flattened xyz.
  Eigen::VectorXd gradient;
};

struct TraceRow {
  int iteration{0};
  double total{0.0};
  double smoothness{0.0};
  double collision{0.0};
  double feasibility{0.0};
  double step{0.0};
};

struct OptimizeResult {
  BSplineTrajectory trajectory;
  int iterations{0};
  CostReport report;
  bool no_descent{false};  // line search failed on the very first iteration
  bool converged{false};   // gradient tolerance reached
  std::vector<TraceRow> trace;
};

/// Control points [first_free, last_free) are optimized; the first and last
/// `degree` points are pinned to hold the boundary states.
struct FreeRange {
  std::size_t first{0};
  std::size_t last{0};
  std::size_t count() const { return last > first ? last - first : 0; }
};
FreeRange free_range(const BSplineTrajectory& traj);

/// Sum of squared third differences P[i+3] - 3P[i+2] + 3P[i+1] - P[i].
/// Throws DegreeTooLow for degree < 3.
TermResult cost_smoothness(const BSplineTrajectory& traj);

/// Cubic barrier (d_safe - d)^3 on the map distance of each free control
/// point below d_safe. Throws StaleField.
TermResult cost_collision(const BSplineTrajectory& traj, const OccupancyMap& map, double d_safe);

/// sum max(0, |v|^2 - v_max^2)^2 + sum max(0, |a|^2 - a_max^2)^2 over all
/// velocity and acceleration control points. Throws DegreeTooLow for
/// degree < 2.
TermResult cost_feasibility(const BSplineTrajectory& traj, double v_max, double a_max);

CostReport total_cost(const BSplineTrajectory& traj, const CostWeights& weights, const OccupancyMap& map);

/// Gradient descent with Armijo backtracking over the free control points.
/// With warm_start the input control points seed the descent; otherwise the
/// free points are first reset onto the straight line between the pinned
/// boundary blocks.
OptimizeResult optimize(const BSplineTrajectory& traj, const CostWeights& weights, const OccupancyMap& map,
                        const OptimizeOptions& options = {}, bool warm_start = true);

/// CSV with header iteration,J,Js,Jc,Jd,step.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace fly0
