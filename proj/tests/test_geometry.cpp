#include <doctest.h>

#include <cmath>

#include <Eigen/LU>

#include "bevgrid/geometry.hpp"
#include "fixtures.hpp"

using namespace bevgrid;

namespace {

double max_diff(const Mat4& a, const Mat4& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("compose and invert") {
  const RigidTransform id;
  CHECK(compose(id, id).matrix() == Mat4::Identity());
  CHECK(invert(id).matrix() == Mat4::Identity());

  const RigidTransform t = RigidTransform::translation(1, 2, 3);
  CHECK(invert(t).translation() == Vec3(-1, -2, -3));

  const RigidTransform q = RigidTransform::rotation_z(M_PI / 2);
  CHECK(max_diff(compose(q, q).matrix(), RigidTransform::rotation_z(M_PI).matrix()) < 1e-15);
  // a after b
  const RigidTransform ab = compose(RigidTransform::translation(1, 0, 0), q);
  CHECK((ab.apply(Vec3(1, 0, 0)) - Vec3(1, 1, 0)).norm() < 1e-15);

  fixture::Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform r = fixture::random_transform(rng, 50.0);
    CHECK(max_diff(compose(r, invert(r)).matrix(), Mat4::Identity()) <= 1e-12);
    CHECK(max_diff(invert(r).matrix(), r.matrix().inverse()) <= 1e-12);
  }
}

TEST_CASE("transform validation") {
  Mat4 m = Mat4::Identity();
  m(0, 0) = 2.0;
  CHECK_THROWS_AS(RigidTransform{m}, std::invalid_argument);
  Mat4 mirror = Mat4::Identity();
  mirror(2, 2) = -1.0;
  CHECK_THROWS_AS(RigidTransform{mirror}, std::invalid_argument);
  Mat4 row = Mat4::Identity();
  row(3, 0) = 1e-3;
  CHECK_THROWS_AS(RigidTransform{row}, std::invalid_argument);
}

TEST_CASE("transform_points") {
  const std::vector<Vec3> one = {Vec3(1, 2, 3)};
  CHECK(transform_points(RigidTransform{}, one)[0] == Vec3(1, 2, 3));
  const std::vector<Vec3> origin = {Vec3::Zero()};
  CHECK(transform_points(RigidTransform::translation(0, 0, 5), origin)[0] == Vec3(0, 0, 5));

  fixture::Rng rng(4);
  const RigidTransform t = fixture::random_transform(rng, 20.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.emplace_back(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-5, 5));
  const auto out = transform_points(t, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Eigen::Vector4d h = t.matrix() * Eigen::Vector4d(pts[i].x(), pts[i].y(), pts[i].z(), 1.0);
    CHECK((out[i] - h.head<3>()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(std::abs((out[i] - out[i - 1]).norm() - (pts[i] - pts[i - 1]).norm()) <= 1e-9);
  }
}

TEST_CASE("unproject") {
  const CameraIntrinsics k(500, 510, 320, 240);
  CHECK(unproject(k, 320, 240, 5) == Vec3(0, 0, 5));
  CHECK(unproject(CameraIntrinsics(1, 1, 0, 0), 2, 3, 1) == Vec3(2, 3, 1));
  CHECK_THROWS_AS(unproject(k, 0, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(unproject(k, 0, 0, -1), std::invalid_argument);

  fixture::Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double u = rng.uniform(-100, 800), v = rng.uniform(-100, 600), d = rng.uniform(0.1, 80);
    const Vec3 p = unproject(k, u, v, d);
    const PixelCoord px = k.project(p);
    CHECK(std::abs(px.u - u) <= 1e-10);
    CHECK(std::abs(px.v - v) <= 1e-10);
    CHECK(std::abs(p.z() - d) <= 1e-9);
  }
}

TEST_CASE("camera rig rejects bad image sizes") {
  CHECK_THROWS_AS(CameraRig({}, 0, 10), std::invalid_argument);
}
