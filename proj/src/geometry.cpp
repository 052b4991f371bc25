#include "bevgrid/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bevgrid {
namespace {

void validate_rigid(const Mat4& m) {
  if (!m.allFinite()) {
    throw std::invalid_argument("RigidTransform: non-finite entry");
  }
  const Eigen::RowVector4d bottom = m.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() >
      kRigidTolerance) {
    throw std::invalid_argument("RigidTransform: bottom row must be (0,0,0,1)");
  }
  const Mat3 r = m.topLeftCorner<3, 3>();
  const double ortho_err = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > kRigidTolerance) {
    throw std::invalid_argument("RigidTransform: rotation not orthonormal (error " +
                                std::to_string(ortho_err) + ")");
  }
  if (std::abs(r.determinant() - 1.0) > kRigidTolerance) {
    throw std::invalid_argument("RigidTransform: rotation determinant must be +1");
  }
}

}  // namespace

RigidTransform::RigidTransform() : m_(Mat4::Identity()) {}

RigidTransform::RigidTransform(const Mat4& matrix) : m_(matrix) {
  validate_rigid(m_);
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : m_(Mat4::Identity()) {
  m_.topLeftCorner<3, 3>() = rotation;
  m_.topRightCorner<3, 1>() = translation;
  validate_rigid(m_);
}

RigidTransform RigidTransform::translation(double x, double y, double z) {
  Mat4 m = Mat4::Identity();
  m(0, 3) = x;
  m(1, 3) = y;
  m(2, 3) = z;
  return RigidTransform(m);
}

RigidTransform RigidTransform::rotation_z(double yaw_rad) {
  return axis_angle(Vec3::UnitZ(), yaw_rad);
}

RigidTransform RigidTransform::axis_angle(const Vec3& axis, double angle_rad,
                                          const Vec3& translation) {
  const Mat3 r = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  return RigidTransform(r, translation);
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  Mat4 m = a.m_ * b.m_;
  m.row(3) << 0, 0, 0, 1;
  return RigidTransform(m, RigidTransform::Unchecked{});
}

RigidTransform invert(const RigidTransform& t) {
  const Mat3 rt = t.rotation().transpose();
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * t.translation();
  return RigidTransform(m, RigidTransform::Unchecked{});
}

std::vector<Vec3> transform_points(const RigidTransform& t,
                                   std::span<const Vec3> pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  const Mat3 r = t.rotation();
  const Vec3 tr = t.translation();
  for (const Vec3& p : pts) out.emplace_back(r * p + tr);
  return out;
}

CameraIntrinsics::CameraIntrinsics(double fx, double fy, double cx, double cy)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy) {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("CameraIntrinsics: focal lengths must be > 0");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(fx) ||
      !std::isfinite(fy)) {
    throw std::invalid_argument("CameraIntrinsics: non-finite parameter");
  }
}

PixelCoord CameraIntrinsics::project(const Vec3& p) const {
  return {fx_ * p.x() / p.z() + cx_, fy_ * p.y() / p.z() + cy_};
}

Vec3 unproject(const CameraIntrinsics& k, double u, double v, double d) {
  if (!(d > 0.0)) {
    throw std::invalid_argument("unproject: depth must be positive, got " +
                                std::to_string(d));
  }
  return {d * (u - k.cx()) / k.fx(), d * (v - k.cy()) / k.fy(), d};
}

CameraRig::CameraRig(std::vector<Camera> cameras, int image_height,
                     int image_width)
    : cameras_(std::move(cameras)),
      image_height_(image_height),
      image_width_(image_width) {
  if (cameras_.empty()) {
    throw std::invalid_argument("CameraRig: at least one camera required");
  }
  if (image_height <= 0 || image_width <= 0) {
    throw std::invalid_argument("CameraRig: image size must be positive");
  }
}

}  // namespace bevgrid
