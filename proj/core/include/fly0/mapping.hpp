#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "fly0/geometry.hpp"

namespace fly0 {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  Frame frame{Frame::Sensor};
};

struct MapConfig {
  double resolution{0.2};
  Eigen::Vector3i window_voxels{100, 100, 100};  // 20 m cube at 0.2 m
  double truncation_radius{2.0};

  void validate() const;
};

struct DistanceSample {
  double distance{0.0};
  Eigen::Vector3d gradient{Eigen::Vector3d::Zero()};
  bool outside_window{false};
};

/// Value and gradient of the trilinear interpolant over one cell.
/// `corners[i + 2*j + 4*k]` is the sample at offset (i, j, k); `frac` is the
/// position inside the cell in [0,1]^3 and `spacing` converts the gradient to
/// per-meter units.
DistanceSample trilinear(const double (&corners)[8], const Eigen::Vector3d& frac, double spacing);

/// Sliding-window voxel occupancy grid with a truncated Euclidean distance
/// field.
///
/// Occupancy lives in a ring buffer addressed by global voxel index, so
/// sliding the window never copies or moves surviving voxels. The distance
/// field is dense over the current window and holds, for every voxel, the
/// distance from its center to the nearest occupied voxel center, clamped to
/// the truncation radius. Occupied voxels buried under the surface layer
/// also carry a penetration depth (distance to the nearest free voxel minus
/// one voxel), which query_distance subtracts so that the interpolated
/// distance keeps falling, and its gradient keeps pointing out, inside solid
/// obstacles. Mutations mark the fields stale until
/// recompute_distance_field() runs.
///
/// Not internally synchronized: mutate under exclusive access; concurrent
/// const queries are fine between mutations.
class OccupancyMap {
 public:
  explicit OccupancyMap(const MapConfig& config = {}, const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

  const MapConfig& config() const { return config_; }
  double resolution() const { return config_.resolution; }
  double truncation_radius() const { return config_.truncation_radius; }
  const Eigen::Vector3d& center() const { return center_; }
  /// Global index of the window's minimum corner voxel.
  const Eigen::Vector3i& window_origin() const { return origin_; }
  bool stale() const { return stale_; }

  /// Marks the voxel of every in-window point occupied. Points outside the
  /// window are dropped. Returns the number of voxels that changed from free
  /// to occupied. Throws InvalidArgument unless the cloud is world-frame.
  std::size_t insert_cloud(const PointCloud& cloud);

  /// Re-centers the window. Voxels in the overlap keep their occupancy;
  /// voxels entering the window start free. Returns true if the window moved.
  bool slide_window(const Eigen::Vector3d& new_center);

  void recompute_distance_field();

  /// Trilinear interpolation of clearance minus penetration, with its
  /// analytic gradient: zero on the surface layer, negative deeper inside.
  /// Points outside the window are clamped onto it and flagged. Throws
  /// StaleField.
  DistanceSample query_distance(const Eigen::Vector3d& p) const;

  Eigen::Vector3i world_to_index(const Eigen::Vector3d& p) const;
  Eigen::Vector3d index_to_center(const Eigen::Vector3i& global) const;
  bool in_window(const Eigen::Vector3i& global) const;
  bool in_window(const Eigen::Vector3d& p) const { return in_window(world_to_index(p)); }

  bool is_occupied(const Eigen::Vector3i& global) const;
  bool is_occupied(const Eigen::Vector3d& p) const { return is_occupied(world_to_index(p)); }
  /// Distance-field value at a voxel center. Throws StaleField; returns the
  /// truncation radius outside the window.
  double voxel_distance(const Eigen::Vector3i& global) const;

  std::size_t occupied_count() const;
  std::vector<Eigen::Vector3i> occupied_voxels() const;

  /// CSV with header x,y,z,occupied (voxel centers, meters).
  void export_csv(std::ostream& out, bool occupied_only = true) const;

 private:
  std::size_t ring_slot(const Eigen::Vector3i& global) const;
  std::size_t local_linear(const Eigen::Vector3i& local) const;
  double penetration(const Eigen::Vector3i& local) const;

  MapConfig config_;
  Eigen::Vector3d center_;
  Eigen::Vector3i origin_;
  std::vector<std::uint8_t> occupied_;  // ring buffer
  std::vector<double> distance_;        // window-linear, x fastest
  std::vector<double> penetration_;     // x-fastest box around buried voxels; empty when none
  Eigen::Vector3i penetration_lo_{Eigen::Vector3i::Zero()};   // box origin, window-local
  Eigen::Vector3i penetration_box_{Eigen::Vector3i::Zero()};  // box extent
  bool stale_{false};
};

}  // namespace fly0
