#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "fly0/bspline.hpp"
#include "fly0/geometry.hpp"
#include "fly0/image.hpp"
#include "fly0/mapping.hpp"

namespace fly0 {

struct Box {
  Eigen::Vector3d center{Eigen::Vector3d::Zero()};
  Eigen::Vector3d size{Eigen::Vector3d::Ones()};  // full edge lengths
};

struct Sphere {
  Eigen::Vector3d center{Eigen::Vector3d::Zero()};
  double radius{1.0};
};

using Rgb = std::array<std::uint8_t, 3>;

struct Obstacle {
  std::variant<Box, Sphere> shape;
  Rgb color{150, 150, 150};

  /// Signed distance to the surface (negative inside).
  double signed_distance(const Eigen::Vector3d& p) const;
  Eigen::Vector3d aabb_min() const;
  Eigen::Vector3d aabb_max() const;
};

struct Bounds {
  Eigen::Vector3d min{Eigen::Vector3d::Zero()};
  Eigen::Vector3d max{Eigen::Vector3d::Constant(20.0)};

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct RayHit {
  double t{0.0};  // ray parameter along the (unnormalized) direction
  std::size_t obstacle{0};
  Eigen::Vector3d normal{Eigen::Vector3d::UnitZ()};
};

/// Static obstacle geometry. Immutable after construction.
class World {
 public:
  World() = default;
  /// Throws InvalidArgument when a primitive is non-finite or leaves bounds.
  World(std::vector<Obstacle> obstacles, Bounds bounds);

  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  const Bounds& bounds() const { return bounds_; }

  /// Nearest hit with t in (0, max_t].
  std::optional<RayHit> raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                                double max_t) const;
  /// Signed distance to the nearest primitive surface; +inf with no obstacles.
  double clearance(const Eigen::Vector3d& p) const;

 private:
  std::vector<Obstacle> obstacles_;
  Bounds bounds_;
};

struct UavState {
  Pose pose;  // body-to-world
  Eigen::Vector3d velocity{Eigen::Vector3d::Zero()};
  double time{0.0};

  Eigen::Vector3d position() const { return pose.translation(); }
};

/// Per-pixel camera-frame z; kNoReturn marks misses and out-of-range hits.
struct DepthMap {
  static constexpr double kNoReturn = 0.0;

  int width{0};
  int height{0};
  double max_range{20.0};
  std::vector<double> depth;

  double at(int x, int y) const { return depth[std::size_t(y) * width + x]; }
  bool valid(int x, int y) const { return at(x, y) > 0.0; }
};

struct CameraView {
  DepthMap depth;
  Image rgb;  // empty unless requested
};

/// Ray-casts every integer pixel coordinate (u, v) through K^-1 [u v 1]^T.
/// Depth stores the camera-frame z of the nearest hit, so back_project of a
/// rendered pixel reconstructs the hit point.
DepthMap render_depth(const World& world, const Pose& camera_pose, const CameraIntrinsics& intrinsics,
                      double max_range);
/// Depth plus a flat-shaded RGB view from the same rays.
CameraView render_view(const World& world, const Pose& camera_pose, const CameraIntrinsics& intrinsics,
                       double max_range, bool with_rgb);

/// Multiplicative Gaussian range noise, sigma = eta * depth, seeded.
void apply_depth_noise(DepthMap& depth, double eta, std::uint64_t seed);

/// Rays on a uniform azimuth x elevation grid over 360 x [-90, +90] degrees
/// from the sensor origin; returns hits within max_range in the sensor frame.
PointCloud sample_lidar(const World& world, const Pose& body_pose, int n_azimuth, int n_elevation,
                        double max_range, const Pose& lidar_extrinsics = Pose::identity());

/// Kinematic playback along `traj`. Position and velocity are read from the
/// spline at min(time + dt, end); velocity is clipped to v_max and zeroed
/// once the trajectory end is reached; yaw follows the horizontal velocity
/// when it exceeds 0.1 m/s.
UavState advance(const UavState& state, const BSplineTrajectory& traj, double dt, double v_max = 4.0);

/// True iff p is within `radius` of (or inside) any primitive.
bool check_collision(const World& world, const Eigen::Vector3d& p, double radius);

}  // namespace fly0
