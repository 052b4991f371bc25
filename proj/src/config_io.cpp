#include "bevgrid/config_io.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "bevgrid/classes.hpp"
#include "bevgrid/formats.hpp"

namespace bevgrid {

namespace {

// Reads the keys of one JSON object and rejects anything left over.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw std::invalid_argument(where_ + ": expected a JSON object");
  }

  template <class T>
  bool get(const std::string& key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument(where_ + "." + key + ": wrong type");
    }
    return true;
  }

  const Json* child(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw std::invalid_argument(where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

  const std::string& where() const { return where_; }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json nullable(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

Json matrix_json(const Tensor& w) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < w.dim(0); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < w.dim(1); ++c) row.push_back(w(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
    throw std::invalid_argument(where + ": expected a non-empty matrix");
  }
  const std::size_t rows = j.size(), cols = j[0].size();
  Tensor w({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw std::invalid_argument(where + ": ragged matrix at row " + std::to_string(r));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw std::invalid_argument(where + ": non-numeric entry");
      w(r, c) = j[r][c].get<double>();
    }
  }
  return w;
}

}  // namespace

Json to_json(const VoxelGridSpec& spec) {
  Json j;
  const char* names[] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    j[names[a]] = {spec.axis(a).min, spec.axis(a).max, spec.axis(a).resolution};
  }
  return j;
}

VoxelGridSpec voxel_spec_from_json(const Json& j) {
  ObjectReader in(j, "grid");
  std::array<AxisRange, 3> axes;
  const char* names[] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    std::vector<double> v;
    if (!in.get(names[a], v) || v.size() != 3) {
      throw std::invalid_argument(std::string("grid.") + names[a] +
                                  ": expected [min, max, resolution]");
    }
    axes[static_cast<std::size_t>(a)] = {v[0], v[1], v[2]};
  }
  in.finish();
  return VoxelGridSpec(axes[0], axes[1], axes[2]);
}

Json to_json(const DepthBins& bins) {
  return {{"d_min", bins.d_min}, {"d_max", bins.d_max}, {"count", bins.count}};
}

DepthBins depth_bins_from_json(const Json& j) {
  ObjectReader in(j, "depth_bins");
  DepthBins b;
  in.get("d_min", b.d_min);
  in.get("d_max", b.d_max);
  in.get("count", b.count);
  in.finish();
  b.validate();
  return b;
}

Json to_json(const LossConfig& cfg) {
  return {{"alpha", cfg.alpha}, {"gamma", cfg.gamma}, {"mu_od", cfg.mu_od},
          {"mu_oc", cfg.mu_oc}, {"omega", cfg.omega}, {"class_weights", cfg.class_weights}};
}

LossConfig loss_config_from_json(const Json& j, LossConfig base) {
  ObjectReader in(j, "loss");
  in.get("alpha", base.alpha);
  in.get("gamma", base.gamma);
  in.get("mu_od", base.mu_od);
  in.get("mu_oc", base.mu_oc);
  in.get("omega", base.omega);
  in.get("class_weights", base.class_weights);
  in.finish();
  base.validate();
  return base;
}

Json to_json(const SceneConfig& cfg) {
  return {{"num_cameras", cfg.num_cameras},
          {"image_height", cfg.image_height},
          {"image_width", cfg.image_width},
          {"horizontal_fov_deg", cfg.horizontal_fov_deg},
          {"camera_height", cfg.camera_height},
          {"grid", to_json(cfg.grid)},
          {"tile_size", cfg.tile_size},
          {"road_half_width_tiles", cfg.road_half_width_tiles},
          {"sidewalk_width_tiles", cfg.sidewalk_width_tiles},
          {"num_vehicles", cfg.num_vehicles},
          {"num_pedestrians", cfg.num_pedestrians},
          {"num_cyclists", cfg.num_cyclists},
          {"ground_points_per_tile", cfg.ground_points_per_tile},
          {"points_per_object", cfg.points_per_object},
          {"max_ego_speed", cfg.max_ego_speed},
          {"frame_interval", cfg.frame_interval}};
}

SceneConfig scene_config_from_json(const Json& j) {
  ObjectReader in(j, "scene");
  SceneConfig c;
  in.get("num_cameras", c.num_cameras);
  in.get("image_height", c.image_height);
  in.get("image_width", c.image_width);
  in.get("horizontal_fov_deg", c.horizontal_fov_deg);
  in.get("camera_height", c.camera_height);
  if (const Json* g = in.child("grid")) c.grid = voxel_spec_from_json(*g);
  in.get("tile_size", c.tile_size);
  in.get("road_half_width_tiles", c.road_half_width_tiles);
  in.get("sidewalk_width_tiles", c.sidewalk_width_tiles);
  in.get("num_vehicles", c.num_vehicles);
  in.get("num_pedestrians", c.num_pedestrians);
  in.get("num_cyclists", c.num_cyclists);
  in.get("ground_points_per_tile", c.ground_points_per_tile);
  in.get("points_per_object", c.points_per_object);
  in.get("max_ego_speed", c.max_ego_speed);
  in.get("frame_interval", c.frame_interval);
  in.finish();
  c.validate();
  return c;
}

Json to_json(const std::array<AdapterPair, 3>& adapters) {
  Json levels = Json::array();
  for (const AdapterPair& p : adapters) {
    levels.push_back({{"occ_to_det", matrix_json(p.occ_to_det.weight)},
                      {"det_to_occ", matrix_json(p.det_to_occ.weight)}});
  }
  return {{"levels", levels}};
}

std::array<AdapterPair, 3> adapters_from_json(const Json& j) {
  ObjectReader in(j, "adapters");
  const Json* levels = in.child("levels");
  in.finish();
  if (!levels || !levels->is_array() || levels->size() != 3) {
    throw std::invalid_argument("adapters.levels: expected three entries");
  }
  std::array<AdapterPair, 3> out;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string where = "adapters.levels[" + std::to_string(k) + "]";
    ObjectReader lv((*levels)[k], where);
    const Json* o2d = lv.child("occ_to_det");
    const Json* d2o = lv.child("det_to_occ");
    lv.finish();
    if (!o2d || !d2o) throw std::invalid_argument(where + ": needs occ_to_det and det_to_occ");
    out[k].occ_to_det = {matrix_from_json(*o2d, where + ".occ_to_det"),
                         FusionDirection::kOccToDet};
    out[k].det_to_occ = {matrix_from_json(*d2o, where + ".det_to_occ"),
                         FusionDirection::kDetToOcc};
    out[k].occ_to_det.validate();
    out[k].det_to_occ.validate();
  }
  return out;
}

Json to_json(const PipelineConfig& cfg) {
  Json j = {{"grid", to_json(cfg.grid)},
            {"depth_bins", to_json(cfg.depth_bins)},
            {"feature_height", cfg.feature_height},
            {"feature_width", cfg.feature_width},
            {"bev_channels", cfg.bev_channels},
            {"task_channels", cfg.task_channels},
            {"lambda", cfg.fusion.lambda},
            {"variant", variant_name(cfg.variant)},
            {"loss", to_json(cfg.loss_config())},
            {"weight_seed", cfg.weight_seed},
            {"max_detections", cfg.max_detections},
            {"score_min", cfg.score_min},
            {"disable_occ_branch", cfg.disable_occ_branch}};
  j["adapters"] = cfg.adapters ? to_json(*cfg.adapters) : Json("identity");
  return j;
}

PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir,
                                         bool validate) {
  ObjectReader in(j, "pipeline");
  PipelineConfig c;
  if (const Json* g = in.child("grid")) c.grid = voxel_spec_from_json(*g);
  if (const Json* d = in.child("depth_bins")) c.depth_bins = depth_bins_from_json(*d);
  in.get("feature_height", c.feature_height);
  in.get("feature_width", c.feature_width);
  in.get("bev_channels", c.bev_channels);
  in.get("task_channels", c.task_channels);
  in.get("lambda", c.fusion.lambda);
  std::string variant;
  if (in.get("variant", variant)) c.variant = parse_variant(variant);
  if (const Json* a = in.child("adapters")) {
    if (a->is_object()) {
      c.adapters = adapters_from_json(*a);
    } else if (a->is_string()) {
      // "identity" or a file name
      const std::string name = a->get<std::string>();
      if (name != "identity") c.adapters = adapters_from_json(load_json(base_dir / name));
    } else {
      throw std::invalid_argument("pipeline.adapters: expected \"identity\", a file name or an object");
    }
  }
  if (const Json* l = in.child("loss")) {
    c.loss = loss_config_from_json(*l, c.variant == OccVariant::kBinary ? LossConfig::binary()
                                                                        : LossConfig::semantic());
  }
  in.get("weight_seed", c.weight_seed);
  in.get("threads", c.threads);
  in.get("max_detections", c.max_detections);
  in.get("score_min", c.score_min);
  in.get("disable_occ_branch", c.disable_occ_branch);
  in.finish();
  if (validate) c.validate();
  return c;
}

Json load_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void save_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

Json to_json(const EvalSummary& s) {
  Json per_class = Json::array();
  for (const ClassEval& c : s.classes) {
    Json ap = Json::object();
    for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) {
      ap[format_double(kDistanceThresholds[t])] = c.ap[t];
    }
    per_class.push_back({{"class", std::string(kDetectionClassNames[static_cast<std::size_t>(c.class_id)])},
                         {"ap", ap},
                         {"trans_err", nullable(c.tp.ate)},
                         {"scale_err", nullable(c.tp.ase)},
                         {"orient_err", nullable(c.tp.aoe)},
                         {"vel_err", nullable(c.tp.ave)},
                         {"attr_err", nullable(c.tp.aae)}});
  }
  return {{"convention", s.convention},
          {"mAP", s.map},
          {"mATE", s.tp.ate},
          {"mASE", s.tp.ase},
          {"mAOE", s.tp.aoe},
          {"mAVE", s.tp.ave},
          {"mAAE", s.tp.aae},
          {"NDS", s.nds},
          {"per_class", per_class}};
}

Json to_json(const MiouResult& r) {
  Json per_class = Json::object();
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const std::string name = r.per_class.size() == kNumSemanticClasses
                                 ? std::string(kSemanticClassNames[k])
                                 : (k == 0 ? "empty" : "occupied");
    per_class[name] = r.per_class[k] ? Json(*r.per_class[k]) : Json(nullptr);
  }
  return {{"mIoU", r.miou ? Json(*r.miou) : Json(nullptr)}, {"per_class", per_class}};
}

Json to_json(const std::vector<StageShape>& trace) {
  Json out = Json::array();
  for (const StageShape& s : trace) out.push_back({{"stage", s.stage}, {"shape", s.shape}});
  return out;
}

Json pipeline_report(const PipelineResult& result, const PipelineEvaluation& eval,
                     const PipelineConfig& cfg) {
  Json losses = {{"focal", eval.od.focal}, {"l1", eval.od.l1}, {"od", eval.od.value}};
  if (eval.oc) {
    losses["lovasz"] = eval.oc->lovasz;
    losses["ce"] = eval.oc->ce;
    losses["oc"] = eval.oc->value;
  }
  losses["total"] = eval.total;
  Json j = {{"config", to_json(cfg)},
            {"trace", to_json(result.trace)},
            {"detections", result.boxes.size()},
            {"losses", losses},
            {"detection", to_json(eval.detection)}};
  if (eval.occupancy) j["occupancy"] = to_json(*eval.occupancy);
  return j;
}

void save_pipeline_outputs(const std::filesystem::path& dir, const PipelineResult& result,
                           const PipelineEvaluation& eval, const PipelineConfig& cfg) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "trace.txt");
    if (!os) throw std::runtime_error("cannot write " + (dir / "trace.txt").string());
    os << format_trace(result.trace);
  }
  save_json(dir / "report.json", pipeline_report(result, eval, cfg));
  save_boxes(dir / "boxes.txt", {result.boxes});
  save_grid(dir / "heatmap.grid",
            GridFile::of(BevFeature{result.heatmap, BevGrid::from(cfg.grid)}));
  save_grid(dir / "bev.grid", GridFile::of(result.bev));
  if (result.occupancy) {
    save_grid(dir / "occupancy.grid", GridFile::of(*result.occupancy, cfg.grid));
  }
}

}  // namespace bevgrid
