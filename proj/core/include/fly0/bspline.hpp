#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace fly0 {

/// Uniform B-spline over world-frame control points.
///
/// With N+1 control points and degree k the knots are
/// u_m = start_time + (m - k) * dt, so the valid domain is
/// [start_time, start_time + (N + 1 - k) * dt].
class BSplineTrajectory {
 public:
  static constexpr int kDefaultDegree = 3;

  BSplineTrajectory(std::vector<Eigen::Vector3d> control_points, double knot_interval, double start_time = 0.0,
                    int degree = kDefaultDegree);

  int degree() const { return degree_; }
  double knot_interval() const { return dt_; }
  double start_time() const { return start_time_; }
  double end_time() const { return start_time_ + duration(); }
  double duration() const { return static_cast<double>(static_cast<int>(points_.size()) - degree_) * dt_; }
  std::size_t size() const { return points_.size(); }

  const std::vector<Eigen::Vector3d>& control_points() const { return points_; }
  const Eigen::Vector3d& control_point(std::size_t i) const { return points_[i]; }

  /// Same knots and degree, different control points (count must match).
  BSplineTrajectory with_control_points(std::vector<Eigen::Vector3d> points) const;

  /// De Boor evaluation. Throws OutOfDomain outside [start_time, end_time]
  /// (a 1e-9 s slack absorbs round-off at the ends).
  Eigen::Vector3d evaluate(double t) const;

  /// Index of the first of the k+1 control points active at t.
  std::size_t active_span(double t) const;

  /// Derivative spline of the given order: degree k - order, control points
  /// from repeated differencing divided by dt. Throws OrderTooHigh.
  BSplineTrajectory derivative(int order = 1) const;

 private:
  std::vector<Eigen::Vector3d> points_;
  double dt_;
  double start_time_;
  int degree_;
};

/// Control points spaced uniformly on start->goal, then the first `degree`
/// points snapped to start and the last `degree` to goal, so the curve
/// starts and ends at rest on the endpoints (exact when n_points >= 2k).
/// Throws TooFewPoints when n_points < degree + 1 and InvalidArgument when
/// dt <= 0.
BSplineTrajectory init_straight_line(const Eigen::Vector3d& start, const Eigen::Vector3d& goal, int n_points,
                                     double dt, int degree = BSplineTrajectory::kDefaultDegree);

/// segment_length / (n_segments * cruise_speed), floored at a small positive
/// value so degenerate (zero-length) segments still yield a valid spline.
double default_knot_interval(double segment_length, int n_segments, double cruise_speed = 2.0);

}  // namespace fly0
