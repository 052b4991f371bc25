#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bevgrid/boxes.hpp"
#include "bevgrid/tensor.hpp"
#include "bevgrid/voxelizer.hpp"

namespace bevgrid {

inline constexpr double kHeatmapClamp = 1e-6;

struct LossConfig {
  double alpha = 2.0;
  double gamma = 4.0;
  double mu_od = 0.25;
  double mu_oc = 1.0;
  double omega = 10.0;
  std::vector<double> class_weights;

  // Semantic variant: 17 equally weighted classes, mu_oc = 1.
  static LossConfig semantic();
  // Binary variant: empty:occupied weighted 1:2, mu_oc = 6.
  static LossConfig binary();

  void validate() const;
};

// Predicted class heatmap (10 x X x Y). Values are probabilities clamped to
// [1e-6, 1 - 1e-6] on construction.
class Heatmap {
 public:
  static Heatmap from_probabilities(Tensor probs);
  const Tensor& values() const { return values_; }

 private:
  explicit Heatmap(Tensor v) : values_(std::move(v)) {}
  Tensor values_;
};

// Ground-truth heatmap (10 x X x Y) with values in [0, 1].
struct GtHeatmap {
  Tensor values;
  void validate() const;
};

// Placement of the heatmap plane in metres.
struct HeatmapGrid {
  int nx = 0;
  int ny = 0;
  double x_min = 0.0;
  double y_min = 0.0;
  double cell_x = 1.0;
  double cell_y = 1.0;
};

enum class GtHeatmapMode { kOneHot, kGaussian };

// Radius (in cells) of the Gaussian drawn for a box whose footprint is
// length x width cells, following the CenterNet/CenterPoint overlap rule.
double gaussian_radius(double length_cells, double width_cells, double min_overlap = 0.1);

// kOneHot writes 1.0 at each in-grid box centre. kGaussian draws
// exp(-r^2 / (2 sigma^2)) on the disk of radius max(2, floor(gaussian_radius))
// around the centre with sigma = (2 * radius + 1) / 6, combining overlapping
// boxes by elementwise max. Boxes whose centre is off-grid are skipped.
GtHeatmap gt_heatmap(const BoxSet& boxes, const HeatmapGrid& grid, GtHeatmapMode mode,
                     int num_classes = 10);

struct LossValue {
  double value = 0.0;
  Tensor grad;
};

// Sum over cells of
//   -floor(gt) log(h) (1-h)^alpha - (1-gt)^gamma log(1-h) h^alpha
// divided by max(1, number of cells with gt == 1).
LossValue gaussian_focal_loss(const Heatmap& h, const GtHeatmap& gt, const LossConfig& cfg);

struct BoxLossValue {
  double value = 0.0;
  std::vector<BoxRow> grad;
};

// (1/M) sum |b - gt| over all 11 columns of M matched pairs. Subgradient 0 at
// exact ties.
BoxLossValue l1_box_loss(const BoxSet& pred, const BoxSet& gt);

// Mean over contributing voxels of w_y * -log softmax(logits)_y. `logits` is
// O x V (any trailing shape with V elements per class). Only voxels with
// mask == 1 contribute.
LossValue weighted_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels,
                                 std::span<const std::uint8_t> mask,
                                 std::span<const double> class_weights);
// Semantic labels: masked voxels only.
LossValue weighted_cross_entropy(const Tensor& logits, const SemanticVoxelGrid& labels,
                                 const LossConfig& cfg);
// Binary labels: every voxel contributes.
LossValue weighted_cross_entropy(const Tensor& logits, const BinaryVoxelGrid& labels,
                                 const LossConfig& cfg);

// Lovasz-softmax over the classes present among masked voxels. `probs` is
// O x V with per-voxel columns summing to 1 (checked to 1e-6 unless
// check_simplex is false). Errors are sorted descending with ties kept in
// voxel order.
LossValue lovasz_softmax(const Tensor& probs, std::span<const std::int32_t> labels,
                         std::span<const std::uint8_t> mask, bool check_simplex = true);
LossValue lovasz_softmax(const Tensor& probs, const SemanticVoxelGrid& labels);

// Softmax over axis 0 of an O x V tensor, and the matching vector-Jacobian
// product.
Tensor softmax_classes(const Tensor& logits);
Tensor softmax_classes_backward(const Tensor& probs, const Tensor& grad_probs);

// Scalar compositions.
double od_loss(double focal, double l1, const LossConfig& cfg);
double oc_loss(double lovasz, double ce, const LossConfig& cfg);
double total_loss(double od, double oc, const LossConfig& cfg);

struct OdLossResult {
  double value = 0.0;
  double focal = 0.0;
  double l1 = 0.0;
  Tensor grad_heatmap;
  std::vector<BoxRow> grad_boxes;
};

// L_G + mu_od * L_1. Without matched boxes the L1 term is omitted (zero).
OdLossResult od_loss(const Heatmap& h, const GtHeatmap& gt, const BoxSet* pred_boxes,
                     const BoxSet* gt_boxes, const LossConfig& cfg);

struct OcLossResult {
  double value = 0.0;
  double lovasz = 0.0;
  double ce = 0.0;
  Tensor grad_logits;
};

// L_lovasz(softmax(logits)) + mu_oc * L_ce(logits), gradient w.r.t. logits.
OcLossResult oc_loss(const Tensor& logits, const SemanticVoxelGrid& labels,
                     const LossConfig& cfg);

struct TotalLossResult {
  double value = 0.0;
  OdLossResult od;
  OcLossResult oc;
};

TotalLossResult total_loss(const OdLossResult& od, const OcLossResult& oc,
                           const LossConfig& cfg);

}  // namespace bevgrid
