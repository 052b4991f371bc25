#include "bevgrid/view_transform.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bevgrid/parallel.hpp"

namespace bevgrid {

std::optional<int> DepthBins::bin_of(double depth) const {
  return axis_index(AxisRange{d_min, d_max, pitch()}, count, depth);
}

void DepthBins::validate() const {
  if (count < 1) throw std::invalid_argument("DepthBins: need at least one bin");
  if (!(d_min >= 0.0) || !(d_max > d_min) || !std::isfinite(d_max)) {
    throw std::invalid_argument("DepthBins: require 0 <= d_min < d_max");
  }
}

void DepthDistribution::validate() const {
  require_rank(values, 4, "DepthDistribution");
  bins.validate();
  if (values.dim(1) != static_cast<std::size_t>(bins.count)) {
    throw std::invalid_argument("DepthDistribution: " + std::to_string(values.dim(1)) +
                                " depth planes but " + std::to_string(bins.count) + " bins");
  }
  const std::size_t n = values.dim(0), nd = values.dim(1), h = values.dim(2),
                    w = values.dim(3);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t d = 0; d < nd; ++d) {
          const double v = values(c, d, y, x);
          if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("DepthDistribution: negative or non-finite weight");
          }
          s += v;
        }
        if (s > 1.0 + 1e-6) {
          throw std::invalid_argument("DepthDistribution: pixel weights sum to " +
                                      std::to_string(s) + " > 1");
        }
      }
    }
  }
}

BevGrid BevGrid::from(const VoxelGridSpec& spec) {
  return BevGrid{spec.x(), spec.y(), spec.nx(), spec.ny()};
}

std::optional<std::pair<int, int>> BevGrid::cell_of(double px, double py) const {
  const auto i = axis_index(x, nx, px);
  if (!i) return std::nullopt;
  const auto j = axis_index(y, ny, py);
  if (!j) return std::nullopt;
  return std::pair{*i, *j};
}

Frustum build_frustum(int height, int width, const DepthBins& bins,
                      const CameraIntrinsics& k, int image_height,
                      int image_width) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("build_frustum: feature size must be positive");
  }
  bins.validate();
  Frustum f{bins.count, height, width, {}};
  f.points.reserve(static_cast<std::size_t>(bins.count) * height * width);
  const double stride_u = static_cast<double>(image_width) / width;
  const double stride_v = static_cast<double>(image_height) / height;
  for (int d = 0; d < bins.count; ++d) {
    const double depth = bins.depth(d);
    for (int h = 0; h < height; ++h) {
      const double v = (h + 0.5) * stride_v;
      for (int w = 0; w < width; ++w) {
        f.points.push_back(unproject(k, (w + 0.5) * stride_u, v, depth));
      }
    }
  }
  return f;
}

BevFeature lift_splat(const ImageFeature& f, const DepthDistribution& d,
                      const CameraRig& rig, const VoxelGridSpec& grid,
                      int threads) {
  require_rank(f.values, 4, "lift_splat image feature");
  d.validate();
  const std::size_t n_cams = f.values.dim(0);
  const std::size_t channels = f.values.dim(1);
  const std::size_t height = f.values.dim(2);
  const std::size_t width = f.values.dim(3);
  if (d.values.dim(0) != n_cams || d.values.dim(2) != height || d.values.dim(3) != width) {
    throw std::invalid_argument("lift_splat: feature " + shape_string(f.values.shape()) +
                                " and depth " + shape_string(d.values.shape()) +
                                " disagree on N, H or W");
  }
  if (rig.size() != n_cams) {
    throw std::invalid_argument("lift_splat: rig has " + std::to_string(rig.size()) +
                                " cameras, features have " + std::to_string(n_cams));
  }

  const BevGrid bev = BevGrid::from(grid);
  const std::size_t plane = static_cast<std::size_t>(bev.nx) * bev.ny;

  // Every non-zero (camera, bin, pixel) weight with its destination cell, in
  // (n, d, h, w) order.
  struct Contribution {
    std::size_t cell;
    std::size_t pixel;  // n * H * W + h * W + w
    double weight;
  };
  std::vector<Contribution> contributions;
  const int bins = d.bins.count;
  for (std::size_t n = 0; n < n_cams; ++n) {
    const Camera& cam = rig[n];
    const Frustum fr = build_frustum(static_cast<int>(height), static_cast<int>(width),
                                     d.bins, cam.intrinsics, rig.image_height(),
                                     rig.image_width());
    const std::vector<Vec3> lidar = transform_points(cam.cam_to_lidar, fr.points);
    std::size_t k = 0;
    for (int b = 0; b < bins; ++b) {
      for (std::size_t h = 0; h < height; ++h) {
        for (std::size_t w = 0; w < width; ++w, ++k) {
          const double weight = d.values(n, b, h, w);
          if (weight == 0.0) continue;
          const auto cell = bev.cell_of(lidar[k].x(), lidar[k].y());
          if (!cell) continue;
          contributions.push_back(
              {static_cast<std::size_t>(cell->first) * bev.ny + cell->second,
               (n * height + h) * width + w, weight});
        }
      }
    }
  }

  BevFeature out{Tensor({channels, static_cast<std::size_t>(bev.nx),
                         static_cast<std::size_t>(bev.ny)}),
                 bev};
  const std::size_t hw = height * width;
  const std::vector<double>& src = f.values.storage();
  std::vector<double>& dst = out.values.storage();
  parallel_for(channels, threads, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      double* out_plane = dst.data() + c * plane;
      for (const Contribution& ct : contributions) {
        const std::size_t cam = ct.pixel / hw;
        const std::size_t pix = ct.pixel % hw;
        out_plane[ct.cell] += src[(cam * channels + c) * hw + pix] * ct.weight;
      }
    }
  });
  return out;
}

namespace {

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

BevFeature temporal_concat(const BevFeature& curr, const BevFeature& adj,
                           const RigidTransform& ego_motion) {
  require_rank(curr.values, 3, "temporal_concat current");
  require_rank(adj.values, 3, "temporal_concat adjacent");
  if (!(curr.grid == adj.grid)) {
    throw std::invalid_argument("temporal_concat: current and adjacent grids differ");
  }
  if (curr.values.shape() != adj.values.shape()) {
    throw std::invalid_argument("temporal_concat: shape " + shape_string(curr.values.shape()) +
                                " vs " + shape_string(adj.values.shape()));
  }
  const BevGrid& g = curr.grid;
  const std::size_t channels = curr.values.dim(0);
  const std::size_t nx = curr.values.dim(1), ny = curr.values.dim(2);
  if (nx != static_cast<std::size_t>(g.nx) || ny != static_cast<std::size_t>(g.ny)) {
    throw std::invalid_argument("temporal_concat: feature plane does not match grid");
  }

  BevFeature out{Tensor({2 * channels, nx, ny}), g};
  const std::size_t plane = nx * ny;
  std::copy(curr.values.storage().begin(), curr.values.storage().end(),
            out.values.storage().begin());

  const std::vector<double>& src = adj.values.storage();
  double* warped = out.values.storage().data() + channels * plane;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const Vec3 p = ego_motion.apply(Vec3(g.center_x(static_cast<int>(i)),
                                           g.center_y(static_cast<int>(j)), 0.0));
      const double fx = snap((p.x() - g.x.min) / g.x.resolution - 0.5);
      const double fy = snap((p.y() - g.y.min) / g.y.resolution - 0.5);
      const double x0 = std::floor(fx), y0 = std::floor(fy);
      const double tx = fx - x0, ty = fy - y0;
      const double corner_w[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
      const double corner_x[4] = {x0, x0 + 1, x0, x0 + 1};
      const double corner_y[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (corner_w[k] == 0.0) continue;
        if (corner_x[k] < 0 || corner_x[k] >= static_cast<double>(nx) || corner_y[k] < 0 ||
            corner_y[k] >= static_cast<double>(ny)) {
          continue;
        }
        const std::size_t cell = static_cast<std::size_t>(corner_x[k]) * ny +
                                 static_cast<std::size_t>(corner_y[k]);
        for (std::size_t c = 0; c < channels; ++c) {
          warped[c * plane + i * ny + j] += corner_w[k] * src[c * plane + cell];
        }
      }
    }
  }
  return out;
}

}  // namespace bevgrid
