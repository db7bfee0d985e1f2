#include "fly0/geometry.hpp"

#include <cmath>
#include <string>

#include "fly0/error.hpp"

namespace fly0 {

namespace {

bool finite(const Eigen::Vector3d& v) { return v.allFinite(); }

}  // namespace

Point3::Point3(const Eigen::Vector3d& p, Frame f) : xyz(p), frame(f) {
  if (!finite(p)) throw Error(ErrorCode::InvalidArgument, "point has non-finite components");
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidIntrinsics, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidIntrinsics, "image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw Error(ErrorCode::InvalidIntrinsics, "principal point outside the image");
}

bool CameraIntrinsics::contains(const PixelTarget& px) const {
  return px.x >= 0.0 && px.x <= width && px.y >= 0.0 && px.y <= height;
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite())
    throw Error(ErrorCode::InvalidPose, "non-finite pose");
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (ortho >= kTolerance || std::abs(det - 1.0) > kTolerance)
    throw Error(ErrorCode::InvalidPose,
                "rotation not orthonormal (|RtR-I|=" + std::to_string(ortho) + ", det=" + std::to_string(det) + ")");
}

Pose Pose::from_translation(const Eigen::Vector3d& t) { return {Eigen::Matrix3d::Identity(), t}; }

Pose Pose::from_yaw(double yaw, const Eigen::Vector3d& t) {
  return {Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(), t};
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
  if (!(q.norm() > 0.0)) throw Error(ErrorCode::InvalidPose, "zero quaternion");
  return {q.normalized().toRotationMatrix(), t};
}

double Pose::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

Pose pose_compose(const Pose& a, const Pose& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

Pose pose_inverse(const Pose& a) {
  const Eigen::Matrix3d rt = a.rotation().transpose();
  return {rt, -(rt * a.translation())};
}

Pose default_camera_extrinsics() {
  Eigen::Matrix3d r;
  // columns: camera x, y, z axes expressed in the body frame
  r << 0.0, 0.0, 1.0,
      -1.0, 0.0, 0.0,
       0.0, -1.0, 0.0;
  return {r, Eigen::Vector3d::Zero()};
}

Point3 back_project(const PixelTarget& pixel, double depth, const CameraIntrinsics& intrinsics) {
  if (!std::isfinite(depth) || depth <= 0.0)
    throw Error(ErrorCode::InvalidDepth, "depth " + std::to_string(depth));
  if (!intrinsics.contains(pixel))
    throw Error(ErrorCode::PixelOutOfBounds,
                "pixel (" + std::to_string(pixel.x) + ", " + std::to_string(pixel.y) + ")");
  // K^-1 [x y 1]^T in closed form
  const double xn = (pixel.x - intrinsics.cx) / intrinsics.fx;
  const double yn = (pixel.y - intrinsics.cy) / intrinsics.fy;
  return {Eigen::Vector3d(depth * xn, depth * yn, depth), Frame::Camera};
}

PixelTarget project(const Point3& point, const CameraIntrinsics& intrinsics) {
  const double z = point.z();
  if (!(z > 0.0)) throw Error(ErrorCode::BehindCamera, "camera-frame z = " + std::to_string(z));
  return {intrinsics.fx * point.x() / z + intrinsics.cx, intrinsics.fy * point.y() / z + intrinsics.cy};
}

Point3 sensor_to_world(const Point3& point, const Pose& sensor_extrinsics, const Pose& body_pose) {
  if (point.frame == Frame::World)
    throw Error(ErrorCode::InvalidArgument, "sensor_to_world expects a sensor-frame point");
  return {body_pose.apply(sensor_extrinsics.apply(point.xyz)), Frame::World};
}

}  // namespace fly0
