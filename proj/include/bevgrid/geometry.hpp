#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace bevgrid {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Rotation validity tolerance applied when a transform is constructed.
inline constexpr double kRigidTolerance = 1e-9;

// Element of SE(3) stored as a homogeneous 4x4 matrix. The matrix maps points
// of a source frame into a target frame (e.g. camera -> lidar).
class RigidTransform {
 public:
  RigidTransform();  // identity

  // Validates that the bottom row is (0,0,0,1) and the rotation block is
  // orthonormal with determinant +1. Throws std::invalid_argument otherwise.
  explicit RigidTransform(const Mat4& matrix);
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return RigidTransform(); }
  static RigidTransform translation(double x, double y, double z);
  static RigidTransform rotation_z(double yaw_rad);
  // Rotation about an arbitrary axis (need not be normalized).
  static RigidTransform axis_angle(const Vec3& axis, double angle_rad,
                                   const Vec3& translation = Vec3::Zero());

  const Mat4& matrix() const { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  Vec3 apply(const Vec3& p) const {
    return m_.topLeftCorner<3, 3>() * p + m_.topRightCorner<3, 1>();
  }

 private:
  struct Unchecked {};
  RigidTransform(const Mat4& matrix, Unchecked) : m_(matrix) {}

  friend RigidTransform compose(const RigidTransform& a,
                                const RigidTransform& b);
  friend RigidTransform invert(const RigidTransform& t);

  Mat4 m_;
};

// Applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

std::vector<Vec3> transform_points(const RigidTransform& t,
                                   std::span<const Vec3> pts);

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

class CameraIntrinsics {
 public:
  CameraIntrinsics(double fx, double fy, double cx, double cy);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }

  // Pinhole projection of a camera-frame point with z > 0.
  PixelCoord project(const Vec3& p) const;

  bool operator==(const CameraIntrinsics&) const = default;

 private:
  double fx_, fy_, cx_, cy_;
};

// Camera-frame point at pixel (u, v) and depth d (metres along the optical
// axis). Throws std::invalid_argument for d <= 0.
Vec3 unproject(const CameraIntrinsics& k, double u, double v, double d);

struct Camera {
  CameraIntrinsics intrinsics;
  RigidTransform cam_to_lidar;
};

class CameraRig {
 public:
  CameraRig(std::vector<Camera> cameras, int image_height, int image_width);

  std::size_t size() const { return cameras_.size(); }
  const Camera& operator[](std::size_t i) const { return cameras_.at(i); }
  const std::vector<Camera>& cameras() const { return cameras_; }
  int image_height() const { return image_height_; }
  int image_width() const { return image_width_; }

 private:
  std::vector<Camera> cameras_;
  int image_height_;
  int image_width_;
};

}  // namespace bevgrid
