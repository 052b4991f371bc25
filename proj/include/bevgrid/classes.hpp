#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace bevgrid {

// Semantic occupancy classes. Id 0 is "empty"; ids 1..16 are the sixteen
// labelled classes. The first ten labelled classes are shared with detection.
inline constexpr int kNumSemanticClasses = 17;
inline constexpr int kNumBinaryClasses = 2;
inline constexpr int kEmptyClass = 0;

inline constexpr std::array<std::string_view, kNumSemanticClasses> kSemanticClassNames = {
    "empty",       "barrier",       "bicycle",     "bus",
    "car",         "construction_vehicle",         "motorcycle",
    "pedestrian",  "traffic_cone",  "trailer",     "truck",
    "driveable_surface",            "other_flat",  "sidewalk",
    "terrain",     "manmade",       "vegetation"};

namespace semantic {
inline constexpr int kBarrier = 1;
inline constexpr int kBicycle = 2;
inline constexpr int kBus = 3;
inline constexpr int kCar = 4;
inline constexpr int kConstructionVehicle = 5;
inline constexpr int kMotorcycle = 6;
inline constexpr int kPedestrian = 7;
inline constexpr int kTrafficCone = 8;
inline constexpr int kTrailer = 9;
inline constexpr int kTruck = 10;
inline constexpr int kDriveableSurface = 11;
inline constexpr int kOtherFlat = 12;
inline constexpr int kSidewalk = 13;
inline constexpr int kTerrain = 14;
inline constexpr int kManmade = 15;
inline constexpr int kVegetation = 16;
}  // namespace semantic

// Detection classes in nuScenes detection order.
inline constexpr int kNumDetectionClasses = 10;
inline constexpr std::array<std::string_view, kNumDetectionClasses> kDetectionClassNames = {
    "car", "truck", "construction_vehicle", "bus", "trailer",
    "barrier", "motorcycle", "bicycle", "pedestrian", "traffic_cone"};

inline constexpr std::array<int, kNumDetectionClasses> kDetectionToSemantic = {
    semantic::kCar,     semantic::kTruck,      semantic::kConstructionVehicle,
    semantic::kBus,     semantic::kTrailer,    semantic::kBarrier,
    semantic::kMotorcycle, semantic::kBicycle, semantic::kPedestrian,
    semantic::kTrafficCone};

namespace detection {
inline constexpr int kCar = 0;
inline constexpr int kTruck = 1;
inline constexpr int kBarrier = 5;
inline constexpr int kBicycle = 7;
inline constexpr int kPedestrian = 8;
inline constexpr int kTrafficCone = 9;
}  // namespace detection

inline std::optional<int> semantic_class_id(std::string_view name) {
  for (int i = 0; i < kNumSemanticClasses; ++i) {
    if (kSemanticClassNames[i] == name) return i;
  }
  return std::nullopt;
}

}  // namespace bevgrid
