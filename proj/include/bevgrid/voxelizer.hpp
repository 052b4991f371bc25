#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bevgrid/classes.hpp"
#include "bevgrid/geometry.hpp"

namespace bevgrid {

struct AxisRange {
  double min = 0.0;
  double max = 0.0;
  double resolution = 0.0;

  bool operator==(const AxisRange&) const = default;
};

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;

  bool operator==(const VoxelIndex&) const = default;
};

// Axis-aligned voxelization bounds. The extent of every axis must be an
// integer multiple of its resolution (relative slack 1e-9).
class VoxelGridSpec {
 public:
  VoxelGridSpec(AxisRange x, AxisRange y, AxisRange z);
  VoxelGridSpec(double x_min, double x_max, double y_min, double y_max,
                double z_min, double z_max, double r_x, double r_y, double r_z);

  const AxisRange& axis(int a) const { return axes_[static_cast<std::size_t>(a)]; }
  const AxisRange& x() const { return axes_[0]; }
  const AxisRange& y() const { return axes_[1]; }
  const AxisRange& z() const { return axes_[2]; }

  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  const std::array<int, 3>& dims() const { return dims_; }
  std::size_t num_voxels() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }
  std::size_t linear(const VoxelIndex& i) const {
    return (static_cast<std::size_t>(i.x) * dims_[1] + i.y) * dims_[2] + i.z;
  }

  bool operator==(const VoxelGridSpec&) const = default;

 private:
  std::array<AxisRange, 3> axes_;
  std::array<int, 3> dims_{};
};

// Index of coordinate v along one axis with `dim` cells: floor((v-min)/res),
// clamped so v == max maps to dim-1. nullopt outside [min, max] or for NaN.
std::optional<int> axis_index(const AxisRange& a, int dim, double v);

// Grid index of p, or nullopt when p lies outside the bounds on any axis.
// Points exactly on an upper bound land in the last voxel of that axis.
std::optional<VoxelIndex> point_to_index(const VoxelGridSpec& spec, const Vec3& p);

// Row-major X x Y x Z grid of {0,1}.
struct BinaryVoxelGrid {
  std::array<int, 3> dims{};
  std::vector<std::uint8_t> values;

  BinaryVoxelGrid() = default;
  explicit BinaryVoxelGrid(std::array<int, 3> d);

  std::uint8_t at(int x, int y, int z) const {
    return values[(static_cast<std::size_t>(x) * dims[1] + y) * dims[2] + z];
  }
  std::size_t count() const;
  bool operator==(const BinaryVoxelGrid&) const = default;
};

// Row-major X x Y x Z grid of class ids plus the supervision mask.
struct SemanticVoxelGrid {
  std::array<int, 3> dims{};
  int num_classes = kNumSemanticClasses;
  std::vector<std::int32_t> class_ids;
  std::vector<std::uint8_t> labeled_mask;

  SemanticVoxelGrid() = default;
  SemanticVoxelGrid(std::array<int, 3> d, int num_classes);

  std::size_t size() const { return class_ids.size(); }
  std::int32_t class_at(int x, int y, int z) const {
    return class_ids[(static_cast<std::size_t>(x) * dims[1] + y) * dims[2] + z];
  }
  // Throws std::invalid_argument when ids leave [0, O-1] or a non-empty voxel
  // is unmasked.
  void validate() const;
  bool operator==(const SemanticVoxelGrid&) const = default;
};

// Binary grid viewed as a two-class semantic grid with every voxel supervised.
SemanticVoxelGrid to_semantic(const BinaryVoxelGrid& grid);

struct LabeledPointCloud {
  std::vector<Vec3> points;
  std::vector<int> labels;

  std::size_t size() const { return points.size(); }
  // Throws std::invalid_argument on length mismatch or labels outside
  // [1, num_classes - 1].
  void validate(int num_classes = kNumSemanticClasses) const;
};

BinaryVoxelGrid binary_occupancy(const VoxelGridSpec& spec,
                                 std::span<const Vec3> points);

// Majority vote per voxel, ties to the lowest class id. Voxels without points
// are class 0 and unmasked.
SemanticVoxelGrid semantic_occupancy(const VoxelGridSpec& spec,
                                     const LabeledPointCloud& cloud,
                                     int num_classes = kNumSemanticClasses);

}  // namespace bevgrid
