#include <doctest.h>

#include <algorithm>
#include <limits>

#include "bevgrid/voxelizer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bevgrid;

namespace {

const VoxelGridSpec kUnit(0, 1, 0, 1, 0, 1, 0.5, 0.5, 0.5);

LabeledPointCloud cloud_of(std::vector<Vec3> pts, std::vector<int> labels) {
  return {std::move(pts), std::move(labels)};
}

}  // namespace

TEST_CASE("spec dims and validation") {
  const VoxelGridSpec s(-51.2, 51.2, -51.2, 51.2, -5, 3, 0.4, 0.4, 0.4);
  CHECK(s.dims() == std::array<int, 3>{256, 256, 20});
  CHECK(kUnit.num_voxels() == 8);
  CHECK_THROWS_AS(VoxelGridSpec(0, 1, 0, 1, 0, 1, 0.3, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(VoxelGridSpec(1, 0, 0, 1, 0, 1, 0.5, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(VoxelGridSpec(0, 1, 0, 1, 0, 1, 0.0, 0.5, 0.5), std::invalid_argument);

  fixture::Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const VoxelGridSpec r = fixture::random_spec(rng);
    const oracle::Dims d = oracle::dims_of(r);
    CHECK(r.dims() == std::array<int, 3>{d.x, d.y, d.z});
  }
}

TEST_CASE("point_to_index") {
  CHECK(point_to_index(kUnit, Vec3(0.5, 0.5, 0.5)) == VoxelIndex{1, 1, 1});
  CHECK_FALSE(point_to_index(kUnit, Vec3(-0.1, 0.5, 0.5)));
  CHECK(point_to_index(kUnit, Vec3(1.0, 1.0, 1.0)) == VoxelIndex{1, 1, 1});
  CHECK(point_to_index(kUnit, Vec3(0, 0, 0)) == VoxelIndex{0, 0, 0});
  CHECK_FALSE(point_to_index(kUnit, Vec3(0.2, std::numeric_limits<double>::quiet_NaN(), 0.2)));
  CHECK_FALSE(point_to_index(kUnit, Vec3(0.2, 0.2, 1.0000001)));
}

TEST_CASE("binary occupancy") {
  CHECK(binary_occupancy(kUnit, std::vector<Vec3>{}).count() == 0);

  std::vector<Vec3> corners;
  for (double x : {0.25, 0.75}) {
    for (double y : {0.25, 0.75}) corners.emplace_back(x, y, 0.75);
  }
  const BinaryVoxelGrid g = binary_occupancy(kUnit, corners);
  CHECK(g.count() == corners.size());
  CHECK(g.at(1, 0, 1) == 1);
  CHECK(g.at(1, 0, 0) == 0);

  fixture::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const VoxelGridSpec s = fixture::random_spec(rng, 6);
    const auto n = static_cast<std::size_t>(rng.integer(0, 400));
    LabeledPointCloud c = fixture::random_cloud(rng, s, n);
    const BinaryVoxelGrid b = binary_occupancy(s, c.points);
    CHECK(b.values == oracle::binary_occupancy(s, c.points));
    CHECK(b.count() <= std::min(n, s.num_voxels()));
    std::shuffle(c.points.begin(), c.points.end(), rng.engine());
    CHECK(binary_occupancy(s, c.points) == b);
  }
}

TEST_CASE("semantic occupancy") {
  const SemanticVoxelGrid empty = semantic_occupancy(kUnit, {});
  CHECK(std::all_of(empty.class_ids.begin(), empty.class_ids.end(), [](int c) { return c == 0; }));
  CHECK(std::all_of(empty.labeled_mask.begin(), empty.labeled_mask.end(), [](int m) { return m == 0; }));

  const Vec3 p(0.1, 0.1, 0.1);
  CHECK(semantic_occupancy(kUnit, cloud_of({p, p, p}, {3, 7, 3})).class_at(0, 0, 0) == 3);
  CHECK(semantic_occupancy(kUnit, cloud_of({p, p}, {5, 2})).class_at(0, 0, 0) == 2);
  const SemanticVoxelGrid one = semantic_occupancy(kUnit, cloud_of({p}, {9}));
  CHECK(one.labeled_mask[0] == 1);
  CHECK(std::count(one.labeled_mask.begin(), one.labeled_mask.end(), 1) == 1);

  CHECK_THROWS_AS(semantic_occupancy(kUnit, cloud_of({p}, {0})), std::invalid_argument);
  CHECK_THROWS_AS(semantic_occupancy(kUnit, cloud_of({p}, {17})), std::invalid_argument);
  CHECK_THROWS_AS(semantic_occupancy(kUnit, cloud_of({p, p}, {1})), std::invalid_argument);

  fixture::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const VoxelGridSpec s = fixture::random_spec(rng, 6);
    LabeledPointCloud c = fixture::random_cloud(rng, s, static_cast<std::size_t>(rng.integer(0, 400)));
    const int label = rng.integer(1, 16);
    std::fill(c.labels.begin(), c.labels.end(), label);
    const SemanticVoxelGrid g = semantic_occupancy(s, c);
    const BinaryVoxelGrid b = binary_occupancy(s, c.points);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(g.class_ids[i] == (b.values[i] ? label : 0));
      CHECK(g.labeled_mask[i] == b.values[i]);
    }
    CHECK_NOTHROW(g.validate());
  }
}

TEST_CASE("binary grid as two-class semantic grid") {
  BinaryVoxelGrid b({1, 1, 2});
  b.values = {0, 1};
  const SemanticVoxelGrid s = to_semantic(b);
  CHECK(s.num_classes == 2);
  CHECK(s.class_ids == std::vector<std::int32_t>{0, 1});
  CHECK(s.labeled_mask == std::vector<std::uint8_t>{1, 1});
}
