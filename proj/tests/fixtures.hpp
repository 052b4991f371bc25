#pragma once

// Random instance builders shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "bevgrid/geometry.hpp"
#include "bevgrid/tensor.hpp"
#include "bevgrid/view_transform.hpp"
#include "bevgrid/voxelizer.hpp"

namespace fixture {

using bevgrid::Vec3;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline bevgrid::RigidTransform random_transform(Rng& rng, double max_translation = 5.0) {
  const Vec3 axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  const Vec3 t(rng.uniform(-max_translation, max_translation),
               rng.uniform(-max_translation, max_translation),
               rng.uniform(-max_translation, max_translation));
  return bevgrid::RigidTransform::axis_angle(axis.norm() > 1e-3 ? axis : Vec3::UnitZ(),
                                             rng.uniform(-M_PI, M_PI), t);
}

inline bevgrid::VoxelGridSpec random_spec(Rng& rng, int max_cells = 20) {
  static constexpr double kResolutions[] = {0.1, 0.2, 0.25, 0.4, 0.5, 0.8, 1.0, 1.6};
  std::array<bevgrid::AxisRange, 3> axes;
  for (auto& a : axes) {
    const double res = kResolutions[rng.integer(0, 7)];
    const int n = rng.integer(1, max_cells);
    a.min = std::round(rng.uniform(-20.0, 5.0) * 10.0) / 10.0;
    a.max = a.min + n * res;
    a.resolution = res;
  }
  return bevgrid::VoxelGridSpec(axes[0], axes[1], axes[2]);
}

// Uniform points around the grid bounds plus exact bound / cell-edge
// coordinates and the odd NaN.
inline bevgrid::LabeledPointCloud random_cloud(Rng& rng, const bevgrid::VoxelGridSpec& spec,
                                               std::size_t count, int classes = 17) {
  bevgrid::LabeledPointCloud c;
  auto coord = [&](const bevgrid::AxisRange& a) {
    const double span = a.max - a.min;
    const double r = rng.uniform(0.0, 1.0);
    if (r < 0.05) return a.min;
    if (r < 0.10) return a.max;
    if (r < 0.20) {
      const int n = static_cast<int>(std::llround(span / a.resolution));
      return a.min + rng.integer(0, n) * a.resolution;
    }
    if (r < 0.201) return std::numeric_limits<double>::quiet_NaN();
    return rng.uniform(a.min - 0.1 * span, a.max + 0.1 * span);
  };
  for (std::size_t i = 0; i < count; ++i) {
    c.points.emplace_back(coord(spec.x()), coord(spec.y()), coord(spec.z()));
    c.labels.push_back(rng.integer(1, classes - 1));
  }
  return c;
}

// Small rig whose frusta mostly fall inside a few-metre grid around the origin.
inline bevgrid::CameraRig random_rig(Rng& rng, int cameras) {
  const int h = rng.integer(8, 48), w = rng.integer(8, 64);
  std::vector<bevgrid::Camera> cams;
  for (int n = 0; n < cameras; ++n) {
    const double f = rng.uniform(0.4, 1.2) * w;
    bevgrid::CameraIntrinsics k(f, f * rng.uniform(0.9, 1.1), w * rng.uniform(0.4, 0.6),
                                h * rng.uniform(0.4, 0.6));
    cams.push_back({k, random_transform(rng, 2.0)});
  }
  return bevgrid::CameraRig(std::move(cams), h, w);
}

inline bevgrid::Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                                     double hi = 1.0) {
  bevgrid::Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

// Non-negative per-pixel weights summing to at most 1, with some exact zeros.
inline bevgrid::Tensor random_depth(Rng& rng, std::size_t n, std::size_t d, std::size_t h,
                                    std::size_t w) {
  bevgrid::Tensor t({n, d, h, w});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double sum = 0.0;
        for (std::size_t b = 0; b < d; ++b) {
          const double v = rng.chance(0.2) ? 0.0 : rng.uniform(0.0, 1.0);
          t(a, b, y, x) = v;
          sum += v;
        }
        if (sum == 0.0) continue;
        const double scale = rng.uniform(0.5, 1.0) / sum;
        for (std::size_t b = 0; b < d; ++b) t(a, b, y, x) *= scale;
      }
    }
  }
  return t;
}

}  // namespace fixture
