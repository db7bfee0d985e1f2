#include "fly0/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <tuple>
#include <ostream>

#include "fly0/error.hpp"

namespace fly0 {

void CostWeights::validate() const {
  if (lambda_s < 0.0 || lambda_c < 0.0 || lambda_d < 0.0)
    throw Error(ErrorCode::InvalidArgument, "cost weights must be non-negative");
  if (!(d_safe > 0.0) || !(v_max > 0.0) || !(a_max > 0.0))
    throw Error(ErrorCode::InvalidArgument, "d_safe, v_max, a_max must be positive");
}

void OptimizeOptions::validate() const {
  if (max_iterations < 0) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 0");
  if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw Error(ErrorCode::InvalidArgument, "step_shrink in (0,1)");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw Error(ErrorCode::InvalidArgument, "armijo_c in (0,1)");
  if (!(initial_step > 0.0)) throw Error(ErrorCode::InvalidArgument, "initial_step must be > 0");
  if (lbfgs_memory < 1) throw Error(ErrorCode::InvalidArgument, "lbfgs_memory must be >= 1");
}

FreeRange free_range(const BSplineTrajectory& traj) {
  const std::size_t k = static_cast<std::size_t>(traj.degree());
  const std::size_t n = traj.size();
  if (n <= 2 * k) return {k, k};
  return {k, n - k};
}

TermResult cost_smoothness(const BSplineTrajectory& traj) {
  if (traj.degree() < 3) throw Error(ErrorCode::DegreeTooLow, "smoothness needs degree >= 3");
  const auto& p = traj.control_points();
  TermResult out;
  out.gradient.assign(p.size(), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i + 3 < p.size(); ++i) {
    const Eigen::Vector3d jerk = p[i + 3] - 3.0 * p[i + 2] + 3.0 * p[i + 1] - p[i];
    out.value += jerk.squaredNorm();
    out.gradient[i + 3] += 2.0 * jerk;
    out.gradient[i + 2] -= 6.0 * jerk;
    out.gradient[i + 1] += 6.0 * jerk;
    out.gradient[i] -= 2.0 * jerk;
  }
  return out;
}

TermResult cost_collision(const BSplineTrajectory& traj, const OccupancyMap& map, double d_safe) {
  if (map.stale()) throw Error(ErrorCode::StaleField, "collision cost on a stale distance field");
  const auto& p = traj.control_points();
  TermResult out;
  out.gradient.assign(p.size(), Eigen::Vector3d::Zero());
  const FreeRange range = free_range(traj);
  for (std::size_t i = range.first; i < range.last; ++i) {
    const DistanceSample s = map.query_distance(p[i]);
    if (s.distance >= d_safe) continue;
    const double gap = d_safe - s.distance;
    out.value += gap * gap * gap;
    out.gradient[i] += -3.0 * gap * gap * s.gradient;
  }
  return out;
}

TermResult cost_feasibility(const BSplineTrajectory& traj, double v_max, double a_max) {
  if (traj.degree() < 2) throw Error(ErrorCode::DegreeTooLow, "feasibility needs degree >= 2");
  const auto& p = traj.control_points();
  const double dt = traj.knot_interval();
  const double inv_dt = 1.0 / dt;
  const double inv_dt2 = inv_dt * inv_dt;
  const double v2 = v_max * v_max;
  const double a2 = a_max * a_max;

  TermResult out;
  out.gradient.assign(p.size(), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const Eigen::Vector3d v = (p[i + 1] - p[i]) * inv_dt;
    const double excess = v.squaredNorm() - v2;
    if (excess <= 0.0) continue;
    out.value += excess * excess;
    const Eigen::Vector3d g = 4.0 * excess * v * inv_dt;
    out.gradient[i + 1] += g;
    out.gradient[i] -= g;
  }
  for (std::size_t i = 0; i + 2 < p.size(); ++i) {
    const Eigen::Vector3d a = (p[i + 2] - 2.0 * p[i + 1] + p[i]) * inv_dt2;
    const double excess = a.squaredNorm() - a2;
    if (excess <= 0.0) continue;
    out.value += excess * excess;
    const Eigen::Vector3d g = 4.0 * excess * a * inv_dt2;
    out.gradient[i + 2] += g;
    out.gradient[i + 1] -= 2.0 * g;
    out.gradient[i] += g;
  }
  return out;
}

CostReport total_cost(const BSplineTrajectory& traj, const CostWeights& weights, const OccupancyMap& map) {
  const TermResult js = cost_smoothness(traj);
  const TermResult jc = cost_collision(traj, map, weights.d_safe);
  const TermResult jd = cost_feasibility(traj, weights.v_max, weights.a_max);

  CostReport r;
  r.smoothness = js.value;
  r.collision = jc.value;
  r.feasibility = jd.value;
  r.total = weights.lambda_s * js.value + weights.lambda_c * jc.value + weights.lambda_d * jd.value;

  const FreeRange range = free_range(traj);
  r.gradient.resize(static_cast<Eigen::Index>(3 * range.count()));
  for (std::size_t i = range.first; i < range.last; ++i) {
    const Eigen::Vector3d g = weights.lambda_s * js.gradient[i] + weights.lambda_c * jc.gradient[i] +
                              weights.lambda_d * jd.gradient[i];
    r.gradient.segment<3>(static_cast<Eigen::Index>(3 * (i - range.first))) = g;
  }
  return r;
}

namespace {

std::vector<Eigen::Vector3d> with_free(const std::vector<Eigen::Vector3d>& base, const FreeRange& range,
                                       const Eigen::VectorXd& x) {
  std::vector<Eigen::Vector3d> pts = base;
  for (std::size_t i = range.first; i < range.last; ++i)
    pts[i] = x.segment<3>(static_cast<Eigen::Index>(3 * (i - range.first)));
  return pts;
}

TraceRow trace_row(int iteration, const CostReport& r, double step) {
  return {iteration, r.total, r.smoothness, r.collision, r.feasibility, step};
}

}  // namespace

OptimizeResult optimize(const BSplineTrajectory& traj, const CostWeights& weights, const OccupancyMap& map,
                        const OptimizeOptions& options, bool warm_start) {
  weights.validate();
  options.validate();
  const FreeRange range = free_range(traj);

  std::vector<Eigen::Vector3d> base = traj.control_points();
  if (!warm_start && range.count() > 0) {
    const Eigen::Vector3d a = base[range.first - 1];
    const Eigen::Vector3d b = base[range.last];
    const double n = static_cast<double>(range.count() + 1);
    for (std::size_t i = range.first; i < range.last; ++i)
      base[i] = a + (b - a) * (static_cast<double>(i - range.first + 1) / n);
  }

  BSplineTrajectory current = traj.with_control_points(base);
  CostReport report = total_cost(current, weights, map);
  OptimizeResult result{current, 0, report, false, false, {}};
  if (options.record_trace) result.trace.push_back(trace_row(0, report, 0.0));
  if (range.count() == 0) {
    result.converged = true;
    return result;
  }

  Eigen::VectorXd x(static_cast<Eigen::Index>(3 * range.count()));
  for (std::size_t i = range.first; i < range.last; ++i)
    x.segment<3>(static_cast<Eigen::Index>(3 * (i - range.first))) = base[i];

  // L-BFGS curvature pairs (s, y, 1 / y.s), newest last.
  std::deque<std::tuple<Eigen::VectorXd, Eigen::VectorXd, double>> history;
  const bool quasi_newton = options.method == DescentMethod::LBFGS;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd& g = report.gradient;
    if (g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Eigen::VectorXd direction = -g;
    if (quasi_newton && !history.empty()) {
      std::vector<double> alpha(history.size());
      Eigen::VectorXd q = g;
      for (std::size_t k = history.size(); k-- > 0;) {
        const auto& [sk, yk, rho] = history[k];
        alpha[k] = rho * sk.dot(q);
        q -= alpha[k] * yk;
      }
      const auto& [sl, yl, rhol] = history.back();
      q *= 1.0 / (rhol * yl.squaredNorm());
      for (std::size_t k = 0; k < history.size(); ++k) {
        const auto& [sk, yk, rho] = history[k];
        q += sk * (alpha[k] - rho * yk.dot(q));
      }
      direction = -q;
      if (!(direction.dot(g) < 0.0)) {
        direction = -g;
        history.clear();
      }
    }
    const double slope = -direction.dot(g);
    double step = options.initial_step;
    bool accepted = false;
    for (int b = 0; b < options.max_backtracks; ++b, step *= options.step_shrink) {
      const Eigen::VectorXd trial = x + step * direction;
      BSplineTrajectory candidate = current.with_control_points(with_free(base, range, trial));
      CostReport trial_report = total_cost(candidate, weights, map);
      if (trial_report.total <= report.total - options.armijo_c * step * slope) {
        if (quasi_newton) {
          Eigen::VectorXd sk = trial - x;
          Eigen::VectorXd yk = trial_report.gradient - report.gradient;
          const double ys = yk.dot(sk);
          if (ys > 1e-12 * sk.squaredNorm()) {
            history.emplace_back(std::move(sk), std::move(yk), 1.0 / ys);
            if (static_cast<int>(history.size()) > options.lbfgs_memory) history.pop_front();
          }
        }
        x = trial;
        current = std::move(candidate);
        report = std::move(trial_report);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (iter == 0) result.no_descent = true;
      break;
    }
    ++result.iterations;
    if (options.record_trace) result.trace.push_back(trace_row(result.iterations, report, step));
  }

  if (result.no_descent) {
    result.trajectory = traj;
    result.report = total_cost(traj, weights, map);
    return result;
  }
  result.trajectory = current;
  result.report = report;
  return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iteration,J,Js,Jc,Jd,step\n";
  for (const auto& r : trace)
    out << r.iteration << ',' << r.total << ',' << r.smoothness << ',' << r.collision << ',' << r.feasibility << ','
        << r.step << '\n';
}

}  // namespace fly0
