#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "bevgrid/geometry.hpp"
#include "bevgrid/tensor.hpp"
#include "bevgrid/voxelizer.hpp"

namespace bevgrid {

inline constexpr int kDefaultBevChannels = 128;

// Uniform depth bins over [d_min, d_max]; bin d is represented by its
// midpoint d_min + (d + 0.5) * pitch.
struct DepthBins {
  double d_min = 1.0;
  double d_max = 60.0;
  int count = 59;

  double pitch() const { return (d_max - d_min) / count; }
  double depth(int d) const { return d_min + (d + 0.5) * pitch(); }
  // Bin containing `depth`, or nullopt outside [d_min, d_max). d_max itself
  // falls into the last bin.
  std::optional<int> bin_of(double depth) const;
  void validate() const;

  bool operator==(const DepthBins&) const = default;
};

// N x C x H x W.
struct ImageFeature {
  Tensor values;
};

// N x D x H x W; non-negative with per-pixel sums at most 1 (+1e-6).
struct DepthDistribution {
  Tensor values;
  DepthBins bins;

  void validate() const;
};

// The x/y part of a voxel grid: the BEV plane.
struct BevGrid {
  AxisRange x;
  AxisRange y;
  int nx = 0;
  int ny = 0;

  static BevGrid from(const VoxelGridSpec& spec);
  double center_x(int i) const { return x.min + (i + 0.5) * x.resolution; }
  double center_y(int j) const { return y.min + (j + 0.5) * y.resolution; }
  std::optional<std::pair<int, int>> cell_of(double px, double py) const;

  bool operator==(const BevGrid&) const = default;
};

// C x X x Y.
struct BevFeature {
  Tensor values;
  BevGrid grid;

  std::size_t channels() const { return values.dim(0); }
};

// Camera-frame points for every (depth bin, feature row, feature column).
struct Frustum {
  int depth_bins = 0;
  int height = 0;
  int width = 0;
  std::vector<Vec3> points;

  const Vec3& at(int d, int h, int w) const {
    return points[(static_cast<std::size_t>(d) * height + h) * width + w];
  }
};

// Feature cell (h, w) samples the image at its pixel centre:
// u = (w + 0.5) * image_width / W, v = (h + 0.5) * image_height / H.
Frustum build_frustum(int height, int width, const DepthBins& bins,
                      const CameraIntrinsics& k, int image_height,
                      int image_width);

// Depth-weighted splat of every camera's features into the BEV plane with
// nearest-cell binning. Output channel count equals the input's. Channels are
// distributed over `threads` workers (0 = all cores); each output value is
// accumulated by one worker in a fixed order, so results do not depend on the
// thread count.
BevFeature lift_splat(const ImageFeature& f, const DepthDistribution& d,
                      const CameraRig& rig, const VoxelGridSpec& grid,
                      int threads = 0);

// Resamples `adj` into the current ego frame and stacks it behind `curr`.
// `ego_motion` maps current-frame coordinates to adjacent-frame coordinates.
// Bilinear sampling at cell centres with zero padding; sample positions within
// 1e-9 cells of a cell centre snap to it.
BevFeature temporal_concat(const BevFeature& curr, const BevFeature& adj,
                           const RigidTransform& ego_motion);

}  // namespace bevgrid
