#include "bevgrid/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bevgrid/classes.hpp"

namespace bevgrid {
namespace {

bool is_multiple(double a, double b) {
  const double r = a / b;
  return std::abs(r - std::round(r)) < 1e-9 * std::max(1.0, r) && std::round(r) >= 1.0;
}

// Attribute codes in nuScenes order.
constexpr int kAttrVehicleMoving = 0;
constexpr int kAttrVehicleParked = 1;
constexpr int kAttrPedestrianMoving = 3;
constexpr int kAttrPedestrianStanding = 4;
constexpr int kAttrCycleWithRider = 6;

struct Tile {
  int tx = 0;
  int ty = 0;
  int label = 0;
  double x0 = 0, y0 = 0;  // lower corner
};

struct ObjectTemplate {
  int det_class;
  double length, width, height;
  double max_speed;
};

}  // namespace

SceneRng::SceneRng(std::uint64_t seed) : engine_(seed) {}

double SceneRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t SceneRng::index(std::size_t n) {
  const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(i, n - 1);
}

void SceneConfig::validate() const {
  if (num_cameras < 1) throw std::invalid_argument("SceneConfig: num_cameras must be >= 1");
  if (image_height < 1 || image_width < 1) {
    throw std::invalid_argument("SceneConfig: image size must be positive");
  }
  if (!(horizontal_fov_deg > 0 && horizontal_fov_deg < 180)) {
    throw std::invalid_argument("SceneConfig: horizontal_fov_deg must lie in (0, 180)");
  }
  if (!(camera_height > 0)) throw std::invalid_argument("SceneConfig: camera_height must be > 0");
  if (!is_multiple(tile_size, grid.x().resolution) || !is_multiple(tile_size, grid.y().resolution)) {
    throw std::invalid_argument("SceneConfig: tile_size must be a multiple of the voxel size");
  }
  if (!is_multiple(grid.x().max - grid.x().min, tile_size) ||
      !is_multiple(grid.y().max - grid.y().min, tile_size)) {
    throw std::invalid_argument("SceneConfig: grid extent must be a multiple of tile_size");
  }
  if (grid.nz() < 2) throw std::invalid_argument("SceneConfig: grid needs at least two z layers");
  if (road_half_width_tiles < 1 || sidewalk_width_tiles < 1) {
    throw std::invalid_argument("SceneConfig: road and sidewalk bands must be >= 1 tile");
  }
  if (num_vehicles < 0 || num_pedestrians < 0 || num_cyclists < 0 ||
      ground_points_per_tile < 0 || points_per_object < 0) {
    throw std::invalid_argument("SceneConfig: counts must be non-negative");
  }
  if (!(max_ego_speed >= 0) || !(frame_interval > 0)) {
    throw std::invalid_argument("SceneConfig: invalid ego motion parameters");
  }
}

RigidTransform ego_motion(const Scene& scene) {
  return compose(invert(scene.ego_adj), scene.ego_curr);
}

CameraRig make_surround_rig(const SceneConfig& cfg) {
  const double ground = cfg.grid.z().min + cfg.grid.z().resolution;
  const double fx = 0.5 * cfg.image_width /
                    std::tan(0.5 * cfg.horizontal_fov_deg * std::numbers::pi / 180.0);
  std::vector<Camera> cams;
  for (int k = 0; k < cfg.num_cameras; ++k) {
    const double yaw = 2.0 * std::numbers::pi * k / cfg.num_cameras;
    const double c = std::cos(yaw), s = std::sin(yaw);
    Mat3 r;
    // Columns: camera x (right), y (down), z (forward) in the lidar frame.
    r << s, 0, c,
        -c, 0, s,
         0, -1, 0;
    cams.push_back({CameraIntrinsics(fx, fx, 0.5 * cfg.image_width, 0.5 * cfg.image_height),
                    RigidTransform(r, Vec3(0.8 * c, 0.8 * s, ground + cfg.camera_height))});
  }
  return CameraRig(std::move(cams), cfg.image_height, cfg.image_width);
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  SceneRng rng(seed);
  const VoxelGridSpec& g = cfg.grid;
  const double ground = g.z().min + g.z().resolution;
  const int ntx = static_cast<int>(std::lround((g.x().max - g.x().min) / cfg.tile_size));
  const int nty = static_cast<int>(std::lround((g.y().max - g.y().min) / cfg.tile_size));

  std::vector<Tile> tiles;
  std::vector<std::size_t> road, sidewalk;
  for (int tx = 0; tx < ntx; ++tx) {
    for (int ty = 0; ty < nty; ++ty) {
      Tile t{tx, ty, 0, g.x().min + tx * cfg.tile_size, g.y().min + ty * cfg.tile_size};
      const double cx = t.x0 + 0.5 * cfg.tile_size, cy = t.y0 + 0.5 * cfg.tile_size;
      const double lateral = std::abs(cy) / cfg.tile_size;
      if (lateral < cfg.road_half_width_tiles) {
        t.label = semantic::kDriveableSurface;
      } else if (lateral < cfg.road_half_width_tiles + cfg.sidewalk_width_tiles) {
        t.label = semantic::kSidewalk;
      } else {
        t.label = rng.uniform() < 0.8 ? semantic::kTerrain : semantic::kOtherFlat;
      }
      const bool near_ego = std::hypot(cx, cy) < cfg.tile_size;
      if (!near_ego && t.label == semantic::kDriveableSurface) road.push_back(tiles.size());
      if (!near_ego && t.label == semantic::kSidewalk) sidewalk.push_back(tiles.size());
      tiles.push_back(t);
    }
  }
  if (static_cast<std::size_t>(cfg.num_vehicles) > road.size()) {
    throw std::invalid_argument("generate_scene: " + std::to_string(cfg.num_vehicles) +
                                " vehicles but only " + std::to_string(road.size()) +
                                " free road tiles");
  }
  if (static_cast<std::size_t>(cfg.num_pedestrians + cfg.num_cyclists) > sidewalk.size()) {
    throw std::invalid_argument("generate_scene: " +
                                std::to_string(cfg.num_pedestrians + cfg.num_cyclists) +
                                " sidewalk objects but only " + std::to_string(sidewalk.size()) +
                                " free sidewalk tiles");
  }
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
  };
  shuffle(road);
  shuffle(sidewalk);

  Scene scene{make_surround_rig(cfg), {}, {}, {}, {}, seed};

  // Ground points sit in the lowest voxel layer, away from tile borders.
  const double margin = 1e-3;
  const double z_lo = g.z().min + 0.25 * g.z().resolution;
  const double z_hi = g.z().min + 0.75 * g.z().resolution;
  for (const Tile& t : tiles) {
    for (int k = 0; k < cfg.ground_points_per_tile; ++k) {
      const double x = rng.uniform(t.x0 + margin, t.x0 + cfg.tile_size - margin);
      const double y = rng.uniform(t.y0 + margin, t.y0 + cfg.tile_size - margin);
      scene.cloud.points.emplace_back(x, y, rng.uniform(z_lo, z_hi));
      scene.cloud.labels.push_back(t.label);
    }
  }

  auto place = [&](const Tile& t, const ObjectTemplate& tmpl, double yaw, int attr_moving,
                   int attr_still) {
    const double scale = rng.uniform(0.95, 1.05);
    const double l = tmpl.length * scale, w = tmpl.width * scale, h = tmpl.height * scale;
    const double slack = std::max(0.0, 0.5 * cfg.tile_size - 0.5 * std::hypot(l, w) - 0.05);
    const double cx = t.x0 + 0.5 * cfg.tile_size + rng.uniform(-slack, slack);
    const double cy = t.y0 + 0.5 * cfg.tile_size + rng.uniform(-slack, slack);
    const double speed = rng.uniform(0.0, tmpl.max_speed);
    const double c = std::cos(yaw), s = std::sin(yaw);
    const BoxRow row = {cx, cy, ground + 0.5 * h, l, w, h, s, c, speed * c, speed * s,
                        static_cast<double>(speed > 0.5 ? attr_moving : attr_still)};
    scene.boxes.add(row, tmpl.det_class);
    const int label = kDetectionToSemantic[static_cast<std::size_t>(tmpl.det_class)];
    for (int k = 0; k < cfg.points_per_object; ++k) {
      const double lx = rng.uniform(-0.5 * l, 0.5 * l);
      const double ly = rng.uniform(-0.5 * w, 0.5 * w);
      const double z = rng.uniform(ground + 0.02, ground + h);
      scene.cloud.points.emplace_back(cx + c * lx - s * ly, cy + s * lx + c * ly, z);
      scene.cloud.labels.push_back(label);
    }
  };

  const ObjectTemplate car{detection::kCar, 4.5, 1.9, 1.7, 10.0};
  const ObjectTemplate truck{detection::kTruck, 5.8, 2.4, 2.8, 8.0};
  const ObjectTemplate pedestrian{detection::kPedestrian, 0.7, 0.7, 1.75, 1.5};
  const ObjectTemplate cyclist{detection::kBicycle, 1.8, 0.6, 1.3, 5.0};
  for (int i = 0; i < cfg.num_vehicles; ++i) {
    const ObjectTemplate& tmpl = rng.uniform() < 0.75 ? car : truck;
    const double yaw = (rng.uniform() < 0.5 ? 0.0 : std::numbers::pi) + rng.uniform(-0.1, 0.1);
    place(tiles[road[static_cast<std::size_t>(i)]], tmpl, yaw, kAttrVehicleMoving,
          kAttrVehicleParked);
  }
  for (int i = 0; i < cfg.num_pedestrians; ++i) {
    const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    place(tiles[sidewalk[static_cast<std::size_t>(i)]], pedestrian, yaw, kAttrPedestrianMoving,
          kAttrPedestrianStanding);
  }
  for (int i = 0; i < cfg.num_cyclists; ++i) {
    const double yaw = (rng.uniform() < 0.5 ? 0.0 : std::numbers::pi) + rng.uniform(-0.2, 0.2);
    place(tiles[sidewalk[static_cast<std::size_t>(cfg.num_pedestrians + i)]], cyclist, yaw,
          kAttrCycleWithRider, kAttrCycleWithRider);
  }

  const double yaw0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const Vec3 origin(rng.uniform(-100, 100), rng.uniform(-100, 100), 0.0);
  scene.ego_curr = RigidTransform::axis_angle(Vec3::UnitZ(), yaw0, origin);
  const double speed = rng.uniform(0.0, cfg.max_ego_speed);
  const double yaw_rate = rng.uniform(-0.2, 0.2);
  // Pose of the current ego in the adjacent ego frame.
  const RigidTransform delta = RigidTransform::axis_angle(
      Vec3::UnitZ(), yaw_rate * cfg.frame_interval, Vec3(speed * cfg.frame_interval, 0, 0));
  scene.ego_adj = compose(scene.ego_curr, invert(delta));
  return scene;
}

std::vector<std::ptrdiff_t> nearest_points(const CameraRig& rig,
                                           std::span<const Vec3> lidar_points,
                                           std::size_t camera, int feature_height,
                                           int feature_width) {
  if (camera >= rig.size()) {
    throw std::invalid_argument("nearest_points: camera " + std::to_string(camera) +
                                " not in rig of " + std::to_string(rig.size()));
  }
  if (feature_height < 1 || feature_width < 1) {
    throw std::invalid_argument("nearest_points: feature size must be positive");
  }
  const auto w = static_cast<std::size_t>(feature_width);
  std::vector<std::ptrdiff_t> index(static_cast<std::size_t>(feature_height) * w, -1);
  std::vector<double> nearest(index.size(), std::numeric_limits<double>::infinity());
  const RigidTransform lidar_to_cam = invert(rig[camera].cam_to_lidar);
  const CameraIntrinsics& k = rig[camera].intrinsics;
  const double stride_u = static_cast<double>(rig.image_width()) / feature_width;
  const double stride_v = static_cast<double>(rig.image_height()) / feature_height;
  for (std::size_t i = 0; i < lidar_points.size(); ++i) {
    const Vec3 pc = lidar_to_cam.apply(lidar_points[i]);
    if (!(pc.z() > 0.0)) continue;
    const PixelCoord px = k.project(pc);
    const double col = std::floor(px.u / stride_u), row = std::floor(px.v / stride_v);
    if (!(col >= 0 && col < feature_width && row >= 0 && row < feature_height)) continue;
    const std::size_t cell = static_cast<std::size_t>(row) * w + static_cast<std::size_t>(col);
    if (pc.z() < nearest[cell]) {
      nearest[cell] = pc.z();
      index[cell] = static_cast<std::ptrdiff_t>(i);
    }
  }
  return index;
}

DepthDistribution oracle_depth(const CameraRig& rig, std::span<const Vec3> lidar_points,
                               std::size_t camera, int feature_height, int feature_width,
                               const DepthBins& bins) {
  bins.validate();
  const auto index = nearest_points(rig, lidar_points, camera, feature_height, feature_width);
  const auto h = static_cast<std::size_t>(feature_height);
  const auto w = static_cast<std::size_t>(feature_width);
  const RigidTransform lidar_to_cam = invert(rig[camera].cam_to_lidar);
  DepthDistribution out{Tensor({1, static_cast<std::size_t>(bins.count), h, w}), bins};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::ptrdiff_t i = index[r * w + c];
      if (i < 0) continue;
      const double depth = lidar_to_cam.apply(lidar_points[static_cast<std::size_t>(i)]).z();
      if (auto bin = bins.bin_of(depth)) out.values(0, *bin, r, c) = 1.0;
    }
  }
  return out;
}

DepthDistribution oracle_depth(const Scene& scene, std::size_t camera, int feature_height,
                               int feature_width, const DepthBins& bins) {
  return oracle_depth(scene.rig, scene.cloud.points, camera, feature_height, feature_width,
                      bins);
}

DepthDistribution oracle_depth_all(const CameraRig& rig, std::span<const Vec3> lidar_points,
                                   int feature_height, int feature_width,
                                   const DepthBins& bins) {
  const auto n = rig.size();
  const auto d = static_cast<std::size_t>(bins.count);
  const auto hw = static_cast<std::size_t>(feature_height) * static_cast<std::size_t>(feature_width);
  DepthDistribution out{Tensor({n, d, static_cast<std::size_t>(feature_height),
                                static_cast<std::size_t>(feature_width)}),
                        bins};
  for (std::size_t cam = 0; cam < n; ++cam) {
    const DepthDistribution one =
        oracle_depth(rig, lidar_points, cam, feature_height, feature_width, bins);
    std::copy(one.values.storage().begin(), one.values.storage().end(),
              out.values.storage().begin() + static_cast<std::ptrdiff_t>(cam * d * hw));
  }
  return out;
}

}  // namespace bevgrid
