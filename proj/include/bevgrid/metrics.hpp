#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bevgrid/boxes.hpp"
#include "bevgrid/classes.hpp"
#include "bevgrid/voxelizer.hpp"

namespace bevgrid {

// ---------------------------------------------------------------------------
// Occupancy

struct MiouResult {
  // IoU per class id; nullopt for classes absent from both grids.
  std::vector<std::optional<double>> per_class;
  // Mean over classes with a value; nullopt when no class is present.
  std::optional<double> miou;
};

// IoU over voxels with gt.labeled_mask == 1.
MiouResult voxel_miou(const SemanticVoxelGrid& pred, const SemanticVoxelGrid& gt);

// ---------------------------------------------------------------------------
// Detection

inline constexpr std::array<double, 4> kDistanceThresholds = {0.5, 1.0, 2.0, 4.0};
inline constexpr double kTpThreshold = 2.0;
inline constexpr double kMinRecall = 0.1;
inline constexpr double kMinPrecision = 0.1;
inline constexpr int kCurvePoints = 101;

inline constexpr const char* kDetectionConvention =
    "nuscenes-detection: center distance thresholds {0.5,1,2,4} m, 101-point "
    "interpolated PR, min_recall 0.1, min_precision 0.1, TP errors at 2 m";

struct Match {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<Match> matches;
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_gt;
};

// BEV-plane distance between box centres.
double center_distance(const BoxRow& a, const BoxRow& b);

// Greedy assignment: predictions in descending score order (ties by index)
// each take the nearest unmatched same-class GT strictly closer than
// `threshold`; distance ties go to the lower GT index.
MatchResult match_by_center_distance(const BoxSet& pred, const BoxSet& gt, double threshold);

struct DetectionFrame {
  BoxSet pred;
  BoxSet gt;
};

// Precision, confidence and cumulative-mean TP errors sampled at 101 evenly
// spaced recall values for one class and distance threshold.
struct MetricCurve {
  std::array<double, kCurvePoints> precision{};
  std::array<double, kCurvePoints> confidence{};
  std::array<double, kCurvePoints> trans_err{};
  std::array<double, kCurvePoints> scale_err{};
  std::array<double, kCurvePoints> orient_err{};
  std::array<double, kCurvePoints> vel_err{};
  std::array<double, kCurvePoints> attr_err{};
  int max_recall_index = 0;
};

// nullopt when the class has no GT box in any frame.
std::optional<MetricCurve> accumulate(std::span<const DetectionFrame> frames, int class_id,
                                      double threshold);

double calc_ap(const MetricCurve& curve);

enum class TpMetric { kTranslation, kScale, kOrientation, kVelocity, kAttribute };
double calc_tp(const MetricCurve& curve, TpMetric metric);

// nullopt when the class has no GT in any frame.
std::optional<double> average_precision(std::span<const DetectionFrame> frames, int class_id,
                                        double threshold);

struct TpErrors {
  double ate = 1.0;
  double ase = 1.0;
  double aoe = 1.0;
  double ave = 1.0;
  double aae = 1.0;
};

double nds(double map, const TpErrors& tp);

struct ClassEval {
  int class_id = 0;
  std::array<double, kDistanceThresholds.size()> ap{};
  // NaN marks metrics that do not apply to the class.
  TpErrors tp;
};

struct EvalSummary {
  std::vector<ClassEval> classes;  // only classes with GT
  double map = 0.0;
  TpErrors tp;
  double nds = 0.0;
  std::string convention = kDetectionConvention;
};

EvalSummary evaluate_detection(std::span<const DetectionFrame> frames);

}  // namespace bevgrid
