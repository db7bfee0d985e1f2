#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace fly0 {

/// Coordinate frame a point is expressed in.
///
/// Camera: z forward, x right, y down. Body: x forward, y left, z up.
/// World: z up. Sensor: any sensor-local frame (lidar, camera) prior to
/// the extrinsic chain.
enum class Frame { Camera, Body, Sensor, World };

struct Point3 {
  Eigen::Vector3d xyz{Eigen::Vector3d::Zero()};
  Frame frame{Frame::World};

  Point3() = default;
  Point3(const Eigen::Vector3d& p, Frame f);
  Point3(double x, double y, double z, Frame f) : Point3(Eigen::Vector3d(x, y, z), f) {}

  static Point3 world(double x, double y, double z) { return {x, y, z, Frame::World}; }
  static Point3 world(const Eigen::Vector3d& p) { return {p, Frame::World}; }

  double x() const { return xyz.x(); }
  double y() const { return xyz.y(); }
  double z() const { return xyz.z(); }
};

/// Continuous pixel coordinate. (0,0) is the top-left image corner.
struct PixelTarget {
  double x{0.0};
  double y{0.0};
};

/// Pinhole intrinsics (no distortion).
struct CameraIntrinsics {
  double fx{320.0};
  double fy{320.0};
  double cx{320.0};
  double cy{240.0};
  int width{640};
  int height{480};

  /// Throws Error(InvalidIntrinsics) when the invariants fail.
  void validate() const;
  bool contains(const PixelTarget& px) const;
  Eigen::Matrix3d matrix() const;
};

/// Rigid transform mapping points from a child frame into a parent frame:
/// p_parent = R * p_child + t. The rotation is kept orthonormal with det +1.
class Pose {
 public:
  static constexpr double kTolerance = 1e-9;

  Pose() = default;
  /// Throws Error(InvalidPose) if `rotation` is not a proper rotation within
  /// kTolerance or any component is non-finite.
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static Pose identity() { return {}; }
  static Pose from_translation(const Eigen::Vector3d& t);
  /// Rotation about the world z axis by `yaw` radians, then translation.
  static Pose from_yaw(double yaw, const Eigen::Vector3d& t = Eigen::Vector3d::Zero());
  /// Builds a pose from a (possibly non-normalized) quaternion.
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }
  double yaw() const;

 private:
  Eigen::Matrix3d rotation_{Eigen::Matrix3d::Identity()};
  Eigen::Vector3d translation_{Eigen::Vector3d::Zero()};
};

/// compose(a, b) applied to p equals a applied to (b applied to p).
Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& a);
inline Pose operator*(const Pose& a, const Pose& b) { return pose_compose(a, b); }

/// Default camera mounting: camera optical axis along body x, image right
/// along body -y, image down along body -z.
Pose default_camera_extrinsics();

/// Pixel + metric depth to a camera-frame point: depth * K^-1 * [x, y, 1]^T.
/// Throws InvalidDepth or PixelOutOfBounds.
Point3 back_project(const PixelTarget& pixel, double depth, const CameraIntrinsics& intrinsics);

/// Camera-frame point to pixel. Throws BehindCamera when z <= 0.
PixelTarget project(const Point3& point, const CameraIntrinsics& intrinsics);

/// R_body * (R_ext * p + t_ext) + t_body. Serves both the camera lifting
/// chain and lidar registration.
Point3 sensor_to_world(const Point3& point, const Pose& sensor_extrinsics, const Pose& body_pose);

}  // namespace fly0
