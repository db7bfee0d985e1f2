#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fly0/bspline.hpp"
#include "fly0/error.hpp"

using namespace fly0;

namespace {

// Cox-de Boor basis on the uniform knots u_m = (m - 3) * dt, written
// independently of the De Boor evaluator under test. The last span is closed
// on the right so the domain end evaluates like the interior.
struct BasisOracle {
  double dt;
  double end;

  double knot(int m) const { return (m - 3) * dt; }
  double operator()(int i, int k, double u) const {
    if (k == 0) {
      const double lo = knot(i), hi = knot(i + 1);
      if (u == end) return hi == end ? 1.0 : 0.0;
      return (u >= lo && u < hi) ? 1.0 : 0.0;
    }
    const double a = (u - knot(i)) / (knot(i + k) - knot(i));
    const double b = (knot(i + k + 1) - u) / (knot(i + k + 1) - knot(i + 1));
    return a * (*this)(i, k - 1, u) + b * (*this)(i + 1, k - 1, u);
  }
};

Eigen::Vector3d oracle_eval(const std::vector<Eigen::Vector3d>& pts, double dt, double t) {
  const int n = static_cast<int>(pts.size());
  const BasisOracle basis{dt, (n - 3) * dt};
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) sum += basis(i, 3, std::min(t, basis.end)) * pts[i];
  return sum;
}

std::vector<Eigen::Vector3d> random_points(std::mt19937_64& rng, int n, double scale = 5.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Eigen::Vector3d> pts(n);
  for (auto& p : pts) p = Eigen::Vector3d(u(rng), u(rng), u(rng));
  return pts;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(BSpline, DomainAndDuration) {
  const BSplineTrajectory s(std::vector<Eigen::Vector3d>(7, Eigen::Vector3d::Zero()), 0.5, 2.0);
  EXPECT_EQ(s.degree(), 3);
  EXPECT_DOUBLE_EQ(s.duration(), 2.0);
  EXPECT_DOUBLE_EQ(s.end_time(), 4.0);
  EXPECT_EQ(code_of([&] { s.evaluate(1.9); }), ErrorCode::OutOfDomain);
  EXPECT_EQ(code_of([&] { s.evaluate(4.1); }), ErrorCode::OutOfDomain);
  EXPECT_NO_THROW(s.evaluate(4.0));
}

TEST(BSpline, ConstructionErrors) {
  EXPECT_EQ(code_of([] { BSplineTrajectory(std::vector<Eigen::Vector3d>(3, Eigen::Vector3d::Zero()), 1.0); }),
            ErrorCode::TooFewPoints);
  EXPECT_EQ(code_of([] { BSplineTrajectory(std::vector<Eigen::Vector3d>(4, Eigen::Vector3d::Zero()), 0.0); }),
            ErrorCode::InvalidTrajectory);
}

TEST(BSpline, PartitionOfUnity) {
  const Eigen::Vector3d c(1.5, -2.0, 3.25);
  const BSplineTrajectory s(std::vector<Eigen::Vector3d>(9, c), 0.3);
  for (int i = 0; i <= 60; ++i) EXPECT_LT((s.evaluate(s.duration() * i / 60.0) - c).norm(), 1e-14);
}

TEST(BSpline, LinearPrecision) {
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 10; ++i) pts.emplace_back(2.0 * i, 0.0, 0.0);
  const BSplineTrajectory s(pts, 0.5);
  // Interior curve is x(t) = 2 + 4 t (one spacing per knot interval, shifted by one point).
  for (int i = 0; i <= 50; ++i) {
    const double t = s.duration() * i / 50.0;
    const Eigen::Vector3d p = s.evaluate(t);
    EXPECT_NEAR(p.x(), 2.0 + 4.0 * t, 1e-12);
    EXPECT_NEAR(p.y(), 0.0, 1e-15);
  }
}

TEST(BSpline, MatchesBasisOracleOnSpecExample) {
  const std::vector<Eigen::Vector3d> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {4, 0, 0}};
  const BSplineTrajectory s(pts, 1.0);
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) EXPECT_NEAR(s.evaluate(t).x(), oracle_eval(pts, 1.0, t).x(), 1e-12);
  // Hand value at the end knot: (P1 + 4 P2 + P3) / 6.
  EXPECT_NEAR(s.evaluate(1.0).x(), (1.0 + 8.0 + 4.0) / 6.0, 1e-12);
}

TEST(BSpline, MatchesBasisOracleOnRandomSplines) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 12);
    const auto pts = random_points(rng, n);
    const double dt = 0.1 + 0.9 * (rng() % 1000) / 1000.0;
    const BSplineTrajectory s(pts, dt, 0.0);
    for (int i = 0; i <= 40; ++i) {
      const double t = i == 40 ? s.duration() : s.duration() * i / 40.0;
      EXPECT_LT((s.evaluate(t) - oracle_eval(pts, dt, t)).norm(), 1e-10);
    }
  }
}

TEST(BSpline, ConvexHullBoundingBox) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = random_points(rng, 4 + static_cast<int>(rng() % 10));
    const BSplineTrajectory s(pts, 0.25, -1.0);
    for (int i = 0; i < 20; ++i) {
      const double t = s.start_time() + unit(rng) * s.duration();
      const std::size_t j = s.active_span(t);
      Eigen::Vector3d lo = pts[j], hi = pts[j];
      for (std::size_t m = j; m <= j + 3; ++m) {
        lo = lo.cwiseMin(pts[m]);
        hi = hi.cwiseMax(pts[m]);
      }
      const Eigen::Vector3d p = s.evaluate(t);
      EXPECT_TRUE(((p - lo).array() >= -1e-12).all() && ((hi - p).array() >= -1e-12).all());
    }
  }
}

TEST(BSpline, EvaluationIsLinearInControlPoints) {
  std::mt19937_64 rng(8);
  const auto a = random_points(rng, 8), b = random_points(rng, 8);
  std::vector<Eigen::Vector3d> sum(8);
  for (int i = 0; i < 8; ++i) sum[i] = a[i] + b[i];
  const BSplineTrajectory sa(a, 0.4), sb(b, 0.4), ss(sum, 0.4);
  for (int i = 0; i <= 30; ++i) {
    const double t = ss.duration() * i / 30.0;
    EXPECT_LT((ss.evaluate(t) - sa.evaluate(t) - sb.evaluate(t)).norm(), 1e-12);
  }
}

TEST(BSplineDerivative, HandDifferences) {
  const BSplineTrajectory line(std::vector<Eigen::Vector3d>{{0, 0, 0}, {2, 0, 0}, {2, 0, 0}, {2, 0, 0}}, 0.5);
  EXPECT_TRUE(line.derivative(1).control_point(0).isApprox(Eigen::Vector3d(4, 0, 0)));
  const BSplineTrajectory step(std::vector<Eigen::Vector3d>{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {1, 0, 0}}, 1.0);
  const BSplineTrajectory jerk = step.derivative(3);
  EXPECT_EQ(jerk.degree(), 0);
  ASSERT_EQ(jerk.size(), 1u);
  EXPECT_TRUE(jerk.control_point(0).isApprox(Eigen::Vector3d(1, 0, 0)));
  const BSplineTrajectory still(std::vector<Eigen::Vector3d>(6, Eigen::Vector3d(3, 3, 3)), 0.2);
  const BSplineTrajectory rest = still.derivative(1);
  for (const auto& v : rest.control_points()) EXPECT_EQ(v.norm(), 0.0);
  EXPECT_EQ(code_of([&] { still.derivative(4); }), ErrorCode::OrderTooHigh);
}

TEST(BSplineDerivative, MatchesCentralDifferences) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const BSplineTrajectory s(random_points(rng, 10), 0.3, 1.0);
    const BSplineTrajectory v = s.derivative(1);
    for (int i = 1; i < 40; ++i) {
      const double t = s.start_time() + s.duration() * i / 40.0;
      const double h = 1e-5;
      const Eigen::Vector3d fd = (s.evaluate(t + h) - s.evaluate(t - h)) / (2 * h);
      const Eigen::Vector3d an = v.evaluate(t);
      EXPECT_LT((fd - an).norm(), 1e-5 * std::max(1.0, an.norm()));
    }
  }
}

TEST(InitStraightLine, DegenerateAndErrors) {
  const Eigen::Vector3d p(1, 2, 3);
  const BSplineTrajectory s = init_straight_line(p, p, 8, 0.5);
  for (const auto& c : s.control_points()) EXPECT_EQ(c, p);
  EXPECT_TRUE(s.evaluate(0.7).isApprox(p));
  EXPECT_EQ(code_of([] { init_straight_line(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones(), 3, 1.0); }),
            ErrorCode::TooFewPoints);
  EXPECT_EQ(code_of([] { init_straight_line(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones(), 5, 0.0); }),
            ErrorCode::InvalidArgument);
}

TEST(InitStraightLine, InteriorOnSegmentAndEndsClamped) {
  const Eigen::Vector3d a(0, 0, 0), b(10, 0, 0);
  const BSplineTrajectory s = init_straight_line(a, b, 11, 0.5);
  const auto& c = s.control_points();
  for (int i = 3; i <= 7; ++i) EXPECT_NEAR(c[i].x(), static_cast<double>(i), 1e-12);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(c[i], a);
    EXPECT_EQ(c[10 - i], b);
  }
  EXPECT_LT((s.evaluate(s.start_time()) - a).norm(), 1e-12);
  EXPECT_LT((s.evaluate(s.end_time()) - b).norm(), 1e-12);
  EXPECT_LT(s.derivative(1).evaluate(s.start_time()).norm(), 1e-12);
}

TEST(DefaultKnotInterval, CruiseSpeedSpacing) {
  EXPECT_DOUBLE_EQ(default_knot_interval(10.0, 10, 2.0), 0.5);
  EXPECT_GT(default_knot_interval(0.0, 10, 2.0), 0.0);
  EXPECT_EQ(code_of([] { default_knot_interval(1.0, 0, 2.0); }), ErrorCode::InvalidArgument);
}
