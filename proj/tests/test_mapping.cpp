#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "fly0/error.hpp"
#include "fly0/mapping.hpp"

using namespace fly0;

namespace {

MapConfig cube_config(int n, double res = 0.2, double trunc = 2.0) {
  MapConfig c;
  c.resolution = res;
  c.window_voxels = Eigen::Vector3i::Constant(n);
  c.truncation_radius = trunc;
  return c;
}

PointCloud world_cloud(std::vector<Eigen::Vector3d> pts) { return {std::move(pts), Frame::World}; }

// All-pairs nearest occupied voxel center, clamped to the truncation radius.
double brute_distance(const OccupancyMap& map, const std::vector<Eigen::Vector3i>& occ, const Eigen::Vector3i& g) {
  double best = map.truncation_radius();
  for (const auto& o : occ) best = std::min(best, (o - g).cast<double>().norm() * map.resolution());
  return best;
}

}  // namespace

TEST(InsertCloud, SpecCases) {
  OccupancyMap map(cube_config(20));
  EXPECT_EQ(map.insert_cloud(world_cloud({})), 0u);
  EXPECT_EQ(map.occupied_count(), 0u);
  EXPECT_EQ(map.insert_cloud(world_cloud({Eigen::Vector3d(0.01, 0.01, 0.01)})), 1u);
  EXPECT_EQ(map.occupied_count(), 1u);
  EXPECT_TRUE(map.is_occupied(Eigen::Vector3d(0.01, 0.01, 0.01)));
  EXPECT_EQ(map.insert_cloud(world_cloud({Eigen::Vector3d(40.0, 0.0, 0.0)})), 0u);
  EXPECT_EQ(map.occupied_count(), 1u);
  // A repeat hit on an occupied voxel changes nothing.
  EXPECT_EQ(map.insert_cloud(world_cloud({Eigen::Vector3d(0.05, 0.05, 0.05)})), 0u);
}

TEST(InsertCloud, RejectsNonWorldFrames) {
  OccupancyMap map(cube_config(10));
  try {
    map.insert_cloud(PointCloud{{Eigen::Vector3d::Zero()}, Frame::Sensor});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(DistanceField, EmptyMapIsTruncated) {
  OccupancyMap map(cube_config(16));
  map.recompute_distance_field();
  for (int i = -8; i < 8; ++i) EXPECT_DOUBLE_EQ(map.voxel_distance(Eigen::Vector3i(i, 0, 3)), 2.0);
  const DistanceSample s = map.query_distance(Eigen::Vector3d(0.3, -0.1, 0.2));
  EXPECT_DOUBLE_EQ(s.distance, 2.0);
  EXPECT_EQ(s.gradient.norm(), 0.0);
}

TEST(DistanceField, SingleVoxelOnAxis) {
  OccupancyMap map(cube_config(40));
  map.insert_cloud(world_cloud({Eigen::Vector3d(0.1, 0.1, 0.1)}));
  map.recompute_distance_field();
  const Eigen::Vector3i g = map.world_to_index(Eigen::Vector3d(0.1, 0.1, 0.1));
  EXPECT_DOUBLE_EQ(map.voxel_distance(g), 0.0);
  EXPECT_NEAR(map.voxel_distance(g + Eigen::Vector3i(5, 0, 0)), 1.0, 1e-12);
  const double q = map.query_distance(Eigen::Vector3d(1.1, 0.1, 0.1)).distance;
  EXPECT_NEAR(q, 1.0, 0.35);
  EXPECT_NEAR(map.query_distance(map.index_to_center(g)).distance, 0.0, 1e-12);
}

TEST(DistanceField, StaleAfterMutation) {
  OccupancyMap map(cube_config(10));
  map.recompute_distance_field();
  EXPECT_FALSE(map.stale());
  map.insert_cloud(world_cloud({Eigen::Vector3d::Zero()}));
  EXPECT_TRUE(map.stale());
  try {
    map.query_distance(Eigen::Vector3d::Zero());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StaleField);
  }
}

TEST(DistanceField, MatchesBruteForceOnRandomMaps) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 6; ++trial) {
    const double trunc = trial % 2 ? 2.0 : 0.9;
    OccupancyMap map(cube_config(32, 0.2, trunc), Eigen::Vector3d(trial * 0.37, -1.3, 0.5));
    std::uniform_int_distribution<int> count(1, 200), axis(0, 31);
    const int n = count(rng);
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3i g = map.window_origin() + Eigen::Vector3i(axis(rng), axis(rng), axis(rng));
      pts.push_back(map.index_to_center(g));
    }
    map.insert_cloud(world_cloud(pts));
    map.recompute_distance_field();
    const auto occ = map.occupied_voxels();
    for (int z = 0; z < 32; ++z)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          const Eigen::Vector3i g = map.window_origin() + Eigen::Vector3i(x, y, z);
          ASSERT_NEAR(map.voxel_distance(g), brute_distance(map, occ, g), 1e-12);
        }
  }
}

TEST(QueryDistance, SolidBlocksGoNegativeByPenetrationDepth) {
  // Solid boxes, some clipped by the window border. At voxel centers the
  // query equals clearance minus (distance to the nearest free voxel, with
  // cells beyond the window free, minus one voxel), truncated.
  std::mt19937_64 rng(5);
  const int n = 16;
  for (int trial = 0; trial < 4; ++trial) {
    const double trunc = trial % 2 ? 2.0 : 0.5;
    OccupancyMap map(cube_config(n, 0.2, trunc), Eigen::Vector3d(trial * 0.41, 0.3, -0.7));
    std::uniform_int_distribution<int> corner(-2, n - 3), size(3, 9);
    std::vector<Eigen::Vector3d> pts;
    for (int b = 0; b < 3; ++b) {
      const Eigen::Vector3i lo(corner(rng), corner(rng), corner(rng));
      const Eigen::Vector3i ext(size(rng), size(rng), size(rng));
      for (int z = 0; z < ext.z(); ++z)
        for (int y = 0; y < ext.y(); ++y)
          for (int x = 0; x < ext.x(); ++x)
            pts.push_back(map.index_to_center(map.window_origin() + lo + Eigen::Vector3i(x, y, z)));
    }
    map.insert_cloud(world_cloud(pts));
    map.recompute_distance_field();

    std::vector<Eigen::Vector3i> free;
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const Eigen::Vector3i g = map.window_origin() + Eigen::Vector3i(x, y, z);
          if (!map.is_occupied(g)) free.push_back(g);
        }
    int negative = 0;
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const Eigen::Vector3i l(x, y, z);
          const Eigen::Vector3i g = map.window_origin() + l;
          double depth = 0.0;
          if (map.is_occupied(g)) {
            const int border = std::min({x + 1, y + 1, z + 1, n - x, n - y, n - z});
            double nearest = border * map.resolution();
            for (const auto& f : free) nearest = std::min(nearest, (f - g).cast<double>().norm() * map.resolution());
            depth = std::max(0.0, std::min(nearest, trunc) - map.resolution());
          }
          const double q = map.query_distance(map.index_to_center(g)).distance;
          ASSERT_NEAR(q, map.voxel_distance(g) - depth, 1e-9) << "voxel " << l.transpose();
          negative += q < 0.0;
        }
    EXPECT_GT(negative, 0);
  }
}

TEST(DistanceField, NonCubicWindow) {
  MapConfig c = cube_config(8);
  c.window_voxels = Eigen::Vector3i(12, 7, 5);
  OccupancyMap map(c);
  std::mt19937_64 rng(1);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 6; ++i)
    pts.push_back(map.index_to_center(map.window_origin() +
                                      Eigen::Vector3i(rng() % 12, rng() % 7, rng() % 5)));
  map.insert_cloud(world_cloud(pts));
  map.recompute_distance_field();
  const auto occ = map.occupied_voxels();
  for (int z = 0; z < 5; ++z)
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 12; ++x) {
        const Eigen::Vector3i g = map.window_origin() + Eigen::Vector3i(x, y, z);
        EXPECT_NEAR(map.voxel_distance(g), brute_distance(map, occ, g), 1e-12);
      }
}

TEST(Trilinear, HandInterpolationBetweenTwoSamples) {
  const double corners[8] = {0.4, 0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.6};
  const DistanceSample s = trilinear(corners, Eigen::Vector3d(0.5, 0.3, 0.8), 0.2);
  EXPECT_NEAR(s.distance, 0.5, 1e-12);
  EXPECT_NEAR(s.gradient.x(), 0.2 / 0.2, 1e-12);
  EXPECT_NEAR(s.gradient.y(), 0.0, 1e-12);
  EXPECT_NEAR(s.gradient.z(), 0.0, 1e-12);
}

TEST(QueryDistance, GradientMatchesFiniteDifferences) {
  OccupancyMap map(cube_config(40));
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 30; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  map.insert_cloud(world_cloud(pts));
  map.recompute_distance_field();
  const double res = map.resolution(), h = res / 10.0;
  int checked = 0;
  while (checked < 300) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    // Stay at least h away from the cell faces so both stencil points share a cell.
    const Eigen::Vector3d cell = (p / res - Eigen::Vector3d::Constant(0.5));
    const Eigen::Vector3d frac = cell - cell.array().floor().matrix();
    if ((frac.array() < 0.11).any() || (frac.array() > 0.89).any()) continue;
    const DistanceSample s = map.query_distance(p);
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e[a] = h;
      const double fd = (map.query_distance(p + e).distance - map.query_distance(p - e).distance) / (2 * h);
      EXPECT_NEAR(fd, s.gradient[a], 1e-6 * std::max(1.0, std::abs(s.gradient[a])));
    }
    ++checked;
  }
}

TEST(QueryDistance, OutsideWindowIsFlagged) {
  OccupancyMap map(cube_config(10));
  map.recompute_distance_field();
  EXPECT_TRUE(map.query_distance(Eigen::Vector3d(50, 0, 0)).outside_window);
  EXPECT_FALSE(map.query_distance(Eigen::Vector3d(0.1, 0.1, 0.1)).outside_window);
}

TEST(SlideWindow, SameCenterIsNoOp) {
  OccupancyMap map(cube_config(20));
  map.insert_cloud(world_cloud({Eigen::Vector3d(0.5, 0.5, 0.5)}));
  EXPECT_FALSE(map.slide_window(map.center()));
  EXPECT_EQ(map.occupied_count(), 1u);
}

TEST(SlideWindow, OverlapKeepsWorldAnchoring) {
  OccupancyMap map(cube_config(20));
  const Eigen::Vector3d p(0.5, -0.7, 1.1);
  map.insert_cloud(world_cloud({p}));
  EXPECT_TRUE(map.slide_window(Eigen::Vector3d(0.2, 0.0, 0.0)));
  EXPECT_TRUE(map.is_occupied(p));
  EXPECT_EQ(map.occupied_count(), 1u);
  EXPECT_TRUE(map.stale());
  map.recompute_distance_field();
  EXPECT_NEAR(map.query_distance(map.index_to_center(map.world_to_index(p))).distance, 0.0, 1e-12);
}

TEST(SlideWindow, FullWidthClearsAndNewVoxelsStartFree) {
  OccupancyMap map(cube_config(20));
  map.insert_cloud(world_cloud({Eigen::Vector3d(0.5, 0.5, 0.5), Eigen::Vector3d(-1.5, 0.3, 0.1)}));
  map.slide_window(Eigen::Vector3d(4.0, 0.0, 0.0));  // exactly one window width
  EXPECT_EQ(map.occupied_count(), 0u);
  // Sliding back must not resurrect the old voxels.
  map.slide_window(Eigen::Vector3d::Zero());
  EXPECT_EQ(map.occupied_count(), 0u);
}

TEST(SlideWindow, RandomWalkMatchesSurvivalOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-6.0, 6.0), step(-1.5, 1.5);
  const int n = 24;
  OccupancyMap map(cube_config(n));
  std::vector<std::pair<Eigen::Vector3i, int>> hits;  // voxel, step inserted
  std::vector<Eigen::Vector3i> origins;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int k = 0; k < 25; ++k) {
    c += Eigen::Vector3d(step(rng), step(rng), step(rng));
    map.slide_window(c);
    origins.push_back(map.window_origin());
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 20; ++i) pts.push_back(c + Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.4);
    map.insert_cloud(world_cloud(pts));
    for (const auto& p : pts) hits.emplace_back(map.world_to_index(p), k);
  }
  // A hit survives iff its voxel stayed inside every window from insertion on.
  const auto inside = [&](const Eigen::Vector3i& g, const Eigen::Vector3i& o) {
    return ((g - o).array() >= 0).all() && ((g - o).array() < n).all();
  };
  std::vector<Eigen::Vector3i> expected;
  for (const auto& [g, k] : hits) {
    bool alive = true;
    for (std::size_t j = k; j < origins.size(); ++j) alive = alive && inside(g, origins[j]);
    if (alive && std::find(expected.begin(), expected.end(), g) == expected.end()) expected.push_back(g);
  }
  const auto actual = map.occupied_voxels();
  EXPECT_EQ(actual.size(), expected.size());
  for (const auto& g : expected) EXPECT_TRUE(map.is_occupied(g));
}

TEST(ExportCsv, HeaderAndRows) {
  OccupancyMap map(cube_config(10));
  map.insert_cloud(world_cloud({Eigen::Vector3d(0.1, 0.1, 0.1)}));
  std::ostringstream out;
  map.export_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,y,z,occupied");
  std::getline(in, line);
  EXPECT_EQ(line, "0.1,0.1,0.1,1");
  EXPECT_FALSE(std::getline(in, line));
}

TEST(MapConfig, ValidateRejectsBadValues) {
  MapConfig c;
  c.resolution = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = MapConfig{};
  c.window_voxels.x() = 1;
  EXPECT_THROW(c.validate(), Error);
}
