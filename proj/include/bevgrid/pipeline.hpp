#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bevgrid/boxes.hpp"
#include "bevgrid/fusion_pyramid.hpp"
#include "bevgrid/losses.hpp"
#include "bevgrid/metrics.hpp"
#include "bevgrid/scenegen.hpp"
#include "bevgrid/tensor.hpp"
#include "bevgrid/view_transform.hpp"
#include "bevgrid/voxelizer.hpp"

namespace bevgrid {

// BO predicts empty/occupied, SE predicts the 17 semantic classes.
enum class OccVariant { kBinary, kSemantic };

const char* variant_name(OccVariant v);
OccVariant parse_variant(const std::string& name);  // "bo" | "se"

// Stand-in network widths are free parameters; only C_bev has a published
// default.
struct PipelineConfig {
  VoxelGridSpec grid{-51.2, 51.2, -51.2, 51.2, -1.0, 5.4, 0.8, 0.8, 0.8};
  DepthBins depth_bins;
  int feature_height = 16;
  int feature_width = 44;
  int bev_channels = kDefaultBevChannels;
  int task_channels = 64;
  FusionConfig fusion;
  std::optional<std::array<AdapterPair, 3>> adapters;  // identity when unset
  OccVariant variant = OccVariant::kSemantic;
  std::optional<LossConfig> loss;  // variant default when unset
  std::uint64_t weight_seed = 7;
  int threads = 0;
  int max_detections = 100;
  double score_min = 0.1;
  bool disable_occ_branch = false;

  int num_occ_classes() const;
  LossConfig loss_config() const;
  std::array<AdapterPair, 3> adapter_pairs() const;
  void validate() const;
};

// A stage dimension or type-invariant failure inside run_forward.
class ContractViolation : public std::runtime_error {
 public:
  ContractViolation(std::string stage, const std::string& message);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageShape {
  std::string stage;
  std::vector<std::size_t> shape;
  bool operator==(const StageShape&) const = default;
};

// Shapes every stage must produce for a rig of `num_cameras`. The detection
// count is data dependent and not listed.
std::vector<StageShape> expected_trace(const PipelineConfig& cfg, std::size_t num_cameras);

// One line per stage: "<stage> <d0>x<d1>x...".
std::string format_trace(const std::vector<StageShape>& trace);

struct PipelineResult {
  Tensor heatmap;     // 10 x X x Y probabilities
  Tensor regression;  // 11 x X x Y, cell-relative centre offsets in planes 0-1
  BoxSet boxes;
  std::optional<SemanticVoxelGrid> occupancy;  // absent with the OC branch disabled
  Tensor occ_logits;                           // O x X x Y x Z
  BevFeature bev;                              // after temporal concat, 2C x X x Y
  Tensor fused_det;
  Tensor fused_occ;
  std::vector<StageShape> trace;
};

// Current-frame BEV feature: stand-in backbone, oracle depth, lift-splat.
BevFeature scene_bev(const Scene& scene, const PipelineConfig& cfg);

// Deterministic forward pass. Throws ContractViolation naming the stage.
PipelineResult run_forward(const Scene& scene, const PipelineConfig& cfg);

// Local maxima of each class plane (3x3, a cell must beat earlier neighbours
// strictly and later ones weakly) with score > score_min, best k by score with
// ties in (class, row, column) order. Planes 0-1 hold the centre offset in
// cells from the cell's lower corner; the other nine are copied verbatim.
BoxSet decode_heatmap(const Tensor& heatmap, const Tensor& regression, const BevGrid& grid,
                      int k, double score_min);

struct PipelineEvaluation {
  OdLossResult od;
  std::optional<OcLossResult> oc;
  double total = 0.0;
  EvalSummary detection;
  std::optional<MiouResult> occupancy;
};

// Losses and metrics of a forward pass against the scene's own labels.
PipelineEvaluation evaluate_forward(const Scene& scene, const PipelineResult& result,
                                    const PipelineConfig& cfg);

// Ground-truth occupancy of the scene for the configured variant.
SemanticVoxelGrid occupancy_labels(const Scene& scene, const PipelineConfig& cfg);

}  // namespace bevgrid
