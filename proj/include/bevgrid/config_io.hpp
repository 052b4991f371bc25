#pragma once

#include <array>
#include <filesystem>

#include <json.hpp>

#include "bevgrid/fusion_pyramid.hpp"
#include "bevgrid/losses.hpp"
#include "bevgrid/metrics.hpp"
#include "bevgrid/pipeline.hpp"
#include "bevgrid/scenegen.hpp"
#include "bevgrid/view_transform.hpp"
#include "bevgrid/voxelizer.hpp"

namespace bevgrid {

using Json = nlohmann::json;

// JSON configs. Readers reject unknown keys and wrong types with
// std::invalid_argument naming the key; omitted keys keep their defaults.
Json to_json(const VoxelGridSpec& spec);
VoxelGridSpec voxel_spec_from_json(const Json& j);

Json to_json(const DepthBins& bins);
DepthBins depth_bins_from_json(const Json& j);

Json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const Json& j, LossConfig base);

Json to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const Json& j);

// {"levels": [{"occ_to_det": [[...]], "det_to_occ": [[...]]} x 3]}, finest
// level first.
Json to_json(const std::array<AdapterPair, 3>& adapters);
std::array<AdapterPair, 3> adapters_from_json(const Json& j);

// "adapters" is "identity", an inline adapter object or a file name resolved
// against `base_dir`. With `validate` false, dimension checks are left to
// run_forward.
Json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const Json& j,
                                         const std::filesystem::path& base_dir = {},
                                         bool validate = true);

Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

// Reports. NaN metrics are written as null.
Json to_json(const EvalSummary& summary);
Json to_json(const MiouResult& result);
Json to_json(const std::vector<StageShape>& trace);
Json pipeline_report(const PipelineResult& result, const PipelineEvaluation& eval,
                     const PipelineConfig& cfg);

// Writes trace.txt, report.json, boxes.txt, heatmap.grid, bev.grid and, with
// the OC branch enabled, occupancy.grid into `dir`.
void save_pipeline_outputs(const std::filesystem::path& dir, const PipelineResult& result,
                           const PipelineEvaluation& eval, const PipelineConfig& cfg);

}  // namespace bevgrid
