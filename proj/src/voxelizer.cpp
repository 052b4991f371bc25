#include "bevgrid/voxelizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace bevgrid {
namespace {

int axis_dim(const AxisRange& a, const char* name) {
  if (!std::isfinite(a.min) || !std::isfinite(a.max) || !std::isfinite(a.resolution)) {
    throw std::invalid_argument(std::string("VoxelGridSpec: non-finite bound on axis ") + name);
  }
  if (!(a.max > a.min)) {
    throw std::invalid_argument(std::string("VoxelGridSpec: max must exceed min on axis ") + name);
  }
  if (!(a.resolution > 0.0)) {
    throw std::invalid_argument(std::string("VoxelGridSpec: resolution must be positive on axis ") + name);
  }
  const double ratio = (a.max - a.min) / a.resolution;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument(std::string("VoxelGridSpec: extent not divisible by resolution on axis ") +
                                name + " (" + std::to_string(ratio) + " voxels)");
  }
  if (rounded > 1e7) {
    throw std::invalid_argument(std::string("VoxelGridSpec: too many voxels on axis ") + name);
  }
  return static_cast<int>(rounded);
}

}  // namespace

VoxelGridSpec::VoxelGridSpec(AxisRange x, AxisRange y, AxisRange z)
    : axes_{x, y, z} {
  dims_ = {axis_dim(x, "x"), axis_dim(y, "y"), axis_dim(z, "z")};
}

VoxelGridSpec::VoxelGridSpec(double x_min, double x_max, double y_min,
                             double y_max, double z_min, double z_max,
                             double r_x, double r_y, double r_z)
    : VoxelGridSpec(AxisRange{x_min, x_max, r_x}, AxisRange{y_min, y_max, r_y},
                    AxisRange{z_min, z_max, r_z}) {}

std::optional<int> axis_index(const AxisRange& a, int dim, double v) {
  // Negated form also rejects NaN.
  if (!(v >= a.min && v <= a.max)) return std::nullopt;
  const int i = static_cast<int>(std::floor((v - a.min) / a.resolution));
  return std::clamp(i, 0, dim - 1);
}

std::optional<VoxelIndex> point_to_index(const VoxelGridSpec& spec, const Vec3& p) {
  const auto ix = axis_index(spec.x(), spec.nx(), p.x());
  if (!ix) return std::nullopt;
  const auto iy = axis_index(spec.y(), spec.ny(), p.y());
  if (!iy) return std::nullopt;
  const auto iz = axis_index(spec.z(), spec.nz(), p.z());
  if (!iz) return std::nullopt;
  return VoxelIndex{*ix, *iy, *iz};
}

BinaryVoxelGrid::BinaryVoxelGrid(std::array<int, 3> d)
    : dims(d), values(static_cast<std::size_t>(d[0]) * d[1] * d[2], 0) {}

std::size_t BinaryVoxelGrid::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1));
}

SemanticVoxelGrid::SemanticVoxelGrid(std::array<int, 3> d, int classes)
    : dims(d),
      num_classes(classes),
      class_ids(static_cast<std::size_t>(d[0]) * d[1] * d[2], kEmptyClass),
      labeled_mask(class_ids.size(), 0) {}

void SemanticVoxelGrid::validate() const {
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (class_ids.size() != n || labeled_mask.size() != n) {
    throw std::invalid_argument("SemanticVoxelGrid: payload size does not match dims");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (class_ids[i] < 0 || class_ids[i] >= num_classes) {
      throw std::invalid_argument("SemanticVoxelGrid: class id " +
                                  std::to_string(class_ids[i]) + " out of range");
    }
    if (labeled_mask[i] > 1) {
      throw std::invalid_argument("SemanticVoxelGrid: mask entries must be 0 or 1");
    }
    if (class_ids[i] != kEmptyClass && labeled_mask[i] != 1) {
      throw std::invalid_argument("SemanticVoxelGrid: occupied voxel without mask");
    }
  }
}

SemanticVoxelGrid to_semantic(const BinaryVoxelGrid& grid) {
  SemanticVoxelGrid out(grid.dims, kNumBinaryClasses);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    out.class_ids[i] = grid.values[i];
    out.labeled_mask[i] = 1;
  }
  return out;
}

void LabeledPointCloud::validate(int num_classes) const {
  if (points.size() != labels.size()) {
    throw std::invalid_argument("LabeledPointCloud: " + std::to_string(points.size()) +
                                " points but " + std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] >= num_classes) {
      throw std::invalid_argument("LabeledPointCloud: label " + std::to_string(labels[i]) +
                                  " of point " + std::to_string(i) + " outside [1, " +
                                  std::to_string(num_classes - 1) + "]");
    }
  }
}

BinaryVoxelGrid binary_occupancy(const VoxelGridSpec& spec,
                                 std::span<const Vec3> points) {
  BinaryVoxelGrid grid(spec.dims());
  for (const Vec3& p : points) {
    if (auto idx = point_to_index(spec, p)) grid.values[spec.linear(*idx)] = 1;
  }
  return grid;
}

SemanticVoxelGrid semantic_occupancy(const VoxelGridSpec& spec,
                                     const LabeledPointCloud& cloud,
                                     int num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("semantic_occupancy: need at least two classes");
  }
  cloud.validate(num_classes);

  // (voxel, label) pairs sorted so each voxel's labels form one run; the
  // vote is then independent of point order.
  std::vector<std::pair<std::size_t, int>> binned;
  binned.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto idx = point_to_index(spec, cloud.points[i])) {
      binned.emplace_back(spec.linear(*idx), cloud.labels[i]);
    }
  }
  std::sort(binned.begin(), binned.end());

  SemanticVoxelGrid grid(spec.dims(), num_classes);
  std::size_t i = 0;
  while (i < binned.size()) {
    const std::size_t voxel = binned[i].first;
    int best_label = binned[i].second;
    std::size_t best_count = 0;
    while (i < binned.size() && binned[i].first == voxel) {
      const int label = binned[i].second;
      std::size_t run = 0;
      while (i < binned.size() && binned[i].first == voxel && binned[i].second == label) {
        ++run;
        ++i;
      }
      // Labels ascend within a voxel, so strict > keeps the lowest id on ties.
      if (run > best_count) {
        best_count = run;
        best_label = label;
      }
    }
    grid.class_ids[voxel] = best_label;
    grid.labeled_mask[voxel] = 1;
  }
  return grid;
}

}  // namespace bevgrid
