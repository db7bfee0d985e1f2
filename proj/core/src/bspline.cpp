#include "fly0/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fly0/error.hpp"

namespace fly0 {

namespace {
constexpr double kDomainSlack = 1e-9;
}

BSplineTrajectory::BSplineTrajectory(std::vector<Eigen::Vector3d> control_points, double knot_interval,
                                     double start_time, int degree)
    : points_(std::move(control_points)), dt_(knot_interval), start_time_(start_time), degree_(degree) {
  if (degree_ < 0) throw Error(ErrorCode::InvalidTrajectory, "negative degree");
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw Error(ErrorCode::InvalidTrajectory, "knot interval must be > 0");
  if (points_.size() < static_cast<std::size_t>(degree_) + 1)
    throw Error(ErrorCode::TooFewPoints, std::to_string(points_.size()) + " control points for degree " +
                                             std::to_string(degree_));
  if (!std::isfinite(start_time_)) throw Error(ErrorCode::InvalidTrajectory, "non-finite start time");
}

BSplineTrajectory BSplineTrajectory::with_control_points(std::vector<Eigen::Vector3d> points) const {
  if (points.size() != points_.size())
    throw Error(ErrorCode::InvalidArgument, "control point count mismatch");
  return {std::move(points), dt_, start_time_, degree_};
}

std::size_t BSplineTrajectory::active_span(double t) const {
  const double local = (t - start_time_) / dt_;
  const int last = static_cast<int>(points_.size()) - 1 - degree_;
  const int span = std::clamp(static_cast<int>(std::floor(local)), 0, last);
  return static_cast<std::size_t>(span);
}

Eigen::Vector3d BSplineTrajectory::evaluate(double t) const {
  if (!(t >= start_time_ - kDomainSlack && t <= end_time() + kDomainSlack))
    throw Error(ErrorCode::OutOfDomain, "t=" + std::to_string(t) + " outside [" + std::to_string(start_time_) +
                                            ", " + std::to_string(end_time()) + "]");
  const std::size_t j = active_span(t);
  const double s = (t - start_time_) / dt_ - static_cast<double>(j);

  // De Boor on the uniform knot vector; alpha = (s + k - i) / (k + 1 - r).
  Eigen::Vector3d d[8];
  std::vector<Eigen::Vector3d> heap;
  Eigen::Vector3d* work = d;
  if (degree_ + 1 > 8) {
    heap.resize(degree_ + 1);
    work = heap.data();
  }
  for (int i = 0; i <= degree_; ++i) work[i] = points_[j + i];
  for (int r = 1; r <= degree_; ++r) {
    for (int i = degree_; i >= r; --i) {
      const double alpha = (s + degree_ - i) / static_cast<double>(degree_ + 1 - r);
      work[i] = (1.0 - alpha) * work[i - 1] + alpha * work[i];
    }
  }
  return work[degree_];
}

BSplineTrajectory BSplineTrajectory::derivative(int order) const {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "derivative order must be >= 1");
  if (order > degree_) throw Error(ErrorCode::OrderTooHigh, "order " + std::to_string(order) + " > degree " +
                                                                 std::to_string(degree_));
  std::vector<Eigen::Vector3d> pts = points_;
  for (int o = 0; o < order; ++o) {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) pts[i] = (pts[i + 1] - pts[i]) / dt_;
    pts.pop_back();
  }
  return {std::move(pts), dt_, start_time_, degree_ - order};
}

BSplineTrajectory init_straight_line(const Eigen::Vector3d& start, const Eigen::Vector3d& goal, int n_points,
                                     double dt, int degree) {
  if (n_points < degree + 1)
    throw Error(ErrorCode::TooFewPoints, std::to_string(n_points) + " < degree + 1");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be > 0");
  std::vector<Eigen::Vector3d> pts(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double w = static_cast<double>(i) / (n_points - 1);
    pts[i] = start + w * (goal - start);
  }
  const int pin = std::min(degree, n_points / 2);
  for (int i = 0; i < pin; ++i) {
    pts[i] = start;
    pts[n_points - 1 - i] = goal;
  }
  return {std::move(pts), dt, 0.0, degree};
}

double default_knot_interval(double segment_length, int n_segments, double cruise_speed) {
  if (n_segments < 1 || !(cruise_speed > 0.0)) throw Error(ErrorCode::InvalidArgument, "bad knot interval inputs");
  return std::max(segment_length / (n_segments * cruise_speed), 1e-3);
}

}  // namespace fly0
