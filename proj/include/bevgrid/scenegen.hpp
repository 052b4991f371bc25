#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bevgrid/boxes.hpp"
#include "bevgrid/geometry.hpp"
#include "bevgrid/view_transform.hpp"
#include "bevgrid/voxelizer.hpp"

namespace bevgrid {

// Generation parameters. Ground is laid out in square tiles aligned to the
// voxel grid: a road band along x through the ego, a sidewalk band on each
// side, and terrain / other_flat beyond. Each object occupies one tile of a
// class that suits it (vehicles on road, pedestrians and cyclists on
// sidewalk), so no voxel ever mixes labels.
struct SceneConfig {
  int num_cameras = 6;
  int image_height = 256;
  int image_width = 704;
  double horizontal_fov_deg = 70.0;
  double camera_height = 1.6;  // above the ground surface

  VoxelGridSpec grid{-51.2, 51.2, -51.2, 51.2, -1.0, 5.4, 0.8, 0.8, 0.8};
  double tile_size = 6.4;
  int road_half_width_tiles = 1;
  int sidewalk_width_tiles = 1;

  int num_vehicles = 8;
  int num_pedestrians = 6;
  int num_cyclists = 2;
  int ground_points_per_tile = 40;
  int points_per_object = 80;

  double max_ego_speed = 10.0;  // m/s
  double frame_interval = 0.5;  // s between the adjacent and current frame

  void validate() const;
};

struct Scene {
  CameraRig rig;
  LabeledPointCloud cloud;  // current ego (= lidar) frame
  BoxSet boxes;
  RigidTransform ego_curr;  // ego -> world at the current timestamp
  RigidTransform ego_adj;   // ego -> world at the adjacent timestamp
  std::uint64_t seed = 0;
};

// Maps current-frame coordinates into the adjacent ego frame.
RigidTransform ego_motion(const Scene& scene);

// Surround rig with evenly spaced yaw, shared by generated scenes.
CameraRig make_surround_rig(const SceneConfig& cfg);

// Pure function of (seed, cfg). Throws std::invalid_argument when more objects
// are requested than there are free tiles of the required ground class.
Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

// Index of the nearest point (smallest camera depth, ties to the lower index)
// projecting into each feature cell of `camera`, row-major H x W; -1 where no
// point lands.
std::vector<std::ptrdiff_t> nearest_points(const CameraRig& rig,
                                           std::span<const Vec3> lidar_points,
                                           std::size_t camera, int feature_height,
                                           int feature_width);

// One-hot depth at the bin of the nearest point projecting into each feature
// cell of camera `camera`; cells without a point (or with depth outside the
// bins) are all zero. Result is 1 x D x H x W.
DepthDistribution oracle_depth(const CameraRig& rig, std::span<const Vec3> lidar_points,
                               std::size_t camera, int feature_height, int feature_width,
                               const DepthBins& bins);
DepthDistribution oracle_depth(const Scene& scene, std::size_t camera, int feature_height,
                               int feature_width, const DepthBins& bins);

// All cameras stacked: N x D x H x W.
DepthDistribution oracle_depth_all(const CameraRig& rig, std::span<const Vec3> lidar_points,
                                   int feature_height, int feature_width,
                                   const DepthBins& bins);

// Random source for scene generation: std::mt19937_64 with doubles formed
// from the top 53 bits of each draw, so sequences are reproducible across
// standard libraries.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed);
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace bevgrid
