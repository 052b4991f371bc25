#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "bevgrid/config_io.hpp"
#include "bevgrid/formats.hpp"
#include "bevgrid/fusion_pyramid.hpp"
#include "bevgrid/losses.hpp"
#include "bevgrid/metrics.hpp"
#include "bevgrid/pipeline.hpp"
#include "bevgrid/scenegen.hpp"
#include "bevgrid/voxelizer.hpp"

namespace fs = std::filesystem;
using namespace bevgrid;

namespace {

constexpr int kExitContract = 2;
constexpr double kFdStep = 1e-6;
constexpr std::size_t kFdSamples = 64;

// Points come from a points file or from the cloud of a scene file.
LabeledPointCloud load_cloud(const fs::path& path) {
  std::ifstream is(path);
  std::string magic;
  is >> magic;
  if (magic == "bevgrid-scene") return load_scene(path).cloud;
  return load_points(path);
}

SemanticVoxelGrid load_labels(const fs::path& path) {
  const GridFile g = load_grid(path);
  if (g.kind == GridKind::kSemantic) return g.semantic;
  if (g.kind == GridKind::kBinary) return to_semantic(g.binary);
  throw std::invalid_argument(path.string() + ": expected a voxel grid");
}

Tensor load_feature(const fs::path& path) {
  const GridFile g = load_grid(path);
  if (g.kind != GridKind::kFeature) throw std::invalid_argument(path.string() + ": expected a feature grid");
  return g.feature;
}

// Flattens everything after the class axis.
Tensor as_classes_by_voxels(const Tensor& t) {
  if (t.rank() < 2) throw std::invalid_argument("class tensor needs at least two axes");
  Tensor flat({t.dim(0), t.size() / t.dim(0)});
  flat.storage() = t.storage();
  return flat;
}

struct FdReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
};

// Central differences on evenly spaced coordinates. `skip` marks coordinates
// sitting on a kink.
FdReport fd_check(Tensor x, const Tensor& grad, const std::function<double(const Tensor&)>& f,
                  const std::function<bool(std::size_t)>& skip) {
  FdReport r;
  const std::size_t n = x.size();
  const std::size_t step = std::max<std::size_t>(1, n / kFdSamples);
  for (std::size_t i = 0; i < n; i += step) {
    if (skip && skip(i)) {
      ++r.skipped;
      continue;
    }
    const double orig = x.storage()[i];
    x.storage()[i] = orig + kFdStep;
    const double up = f(x);
    x.storage()[i] = orig - kFdStep;
    const double down = f(x);
    x.storage()[i] = orig;
    const double numeric = (up - down) / (2.0 * kFdStep);
    const double analytic = grad.storage()[i];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(numeric - analytic) / denom);
    ++r.checked;
  }
  return r;
}

Json fd_json(const FdReport& r) {
  return {{"step", kFdStep},
          {"checked", r.checked},
          {"skipped", r.skipped},
          {"max_rel_error", r.max_rel_error}};
}

Tensor boxes_tensor(const std::vector<BoxRow>& rows) {
  Tensor t({rows.size(), std::size_t{kBoxDims}});
  for (std::size_t m = 0; m < rows.size(); ++m) {
    std::copy(rows[m].begin(), rows[m].end(), t.storage().begin() + static_cast<long>(m * kBoxDims));
  }
  return t;
}

LossConfig config_for(const SemanticVoxelGrid& labels) {
  return labels.num_classes == kNumBinaryClasses ? LossConfig::binary() : LossConfig::semantic();
}

Json run_loss(const std::string& kind, const std::vector<std::string>& inputs, bool grad_check,
              const std::string& grad_out) {
  auto need = [&](std::size_t n) {
    if (inputs.size() < n) {
      throw std::invalid_argument("loss --kind " + kind + " needs " + std::to_string(n) +
                                  " input files");
    }
  };
  Json out = {{"kind", kind}};
  auto save_grad = [&](const Tensor& g, const std::string& suffix) {
    if (grad_out.empty()) return;
    const std::string path = grad_out + suffix;
    save_grid(path, GridFile::of(g));
    out["grad_files"].push_back(path);
  };

  if (kind == "focal") {
    need(2);
    const LossConfig cfg = LossConfig::semantic();
    const Tensor probs = load_feature(inputs[0]);
    const GtHeatmap gt{load_feature(inputs[1])};
    const LossValue v = gaussian_focal_loss(Heatmap::from_probabilities(probs), gt, cfg);
    out["value"] = v.value;
    save_grad(v.grad, "");
    if (grad_check) {
      const Tensor clamped = Heatmap::from_probabilities(probs).values();
      out["grad_check"] = fd_json(fd_check(
          clamped, v.grad,
          [&](const Tensor& x) {
            return gaussian_focal_loss(Heatmap::from_probabilities(x), gt, cfg).value;
          },
          [&](std::size_t i) {
            const double h = clamped.storage()[i];
            return h <= kHeatmapClamp + kFdStep || h >= 1.0 - kHeatmapClamp - kFdStep;
          }));
    }
  } else if (kind == "l1") {
    need(2);
    const auto pred = load_boxes(inputs[0]);
    const auto gt = load_boxes(inputs[1]);
    if (pred.empty() || gt.empty()) throw std::invalid_argument("box files hold no frames");
    const BoxLossValue v = l1_box_loss(pred[0], gt[0]);
    out["value"] = v.value;
    const Tensor g = boxes_tensor(v.grad);
    save_grad(g, "");
    if (grad_check) {
      const Tensor x = boxes_tensor(pred[0].rows);
      const Tensor y = boxes_tensor(gt[0].rows);
      out["grad_check"] = fd_json(fd_check(
          x, g,
          [&](const Tensor& t) {
            BoxSet p = pred[0];
            for (std::size_t m = 0; m < p.size(); ++m) {
              std::copy_n(t.storage().begin() + static_cast<long>(m * kBoxDims), kBoxDims,
                          p.rows[m].begin());
            }
            return l1_box_loss(p, gt[0]).value;
          },
          [&](std::size_t i) { return std::abs(x.storage()[i] - y.storage()[i]) <= 2 * kFdStep; }));
    }
  } else if (kind == "ce" || kind == "lovasz") {
    need(2);
    const Tensor in = as_classes_by_voxels(load_feature(inputs[0]));
    const SemanticVoxelGrid labels = load_labels(inputs[1]);
    const LossConfig cfg = config_for(labels);
    auto eval = [&](const Tensor& x) {
      return kind == "ce" ? weighted_cross_entropy(x, labels, cfg)
                          : lovasz_softmax(x, labels.class_ids, labels.labeled_mask, false);
    };
    const LossValue v = eval(in);
    out["value"] = v.value;
    save_grad(v.grad, "");
    if (grad_check) {
      out["grad_check"] =
          fd_json(fd_check(in, v.grad, [&](const Tensor& x) { return eval(x).value; }, {}));
    }
  } else if (kind == "total") {
    need(4);
    const Tensor probs = load_feature(inputs[0]);
    const GtHeatmap gt{load_feature(inputs[1])};
    const Tensor logits = as_classes_by_voxels(load_feature(inputs[2]));
    const SemanticVoxelGrid labels = load_labels(inputs[3]);
    const LossConfig cfg = config_for(labels);
    std::vector<BoxSet> pred, gtb;
    if (inputs.size() >= 6) {
      pred = load_boxes(inputs[4]);
      gtb = load_boxes(inputs[5]);
    }
    const BoxSet* pb = pred.empty() ? nullptr : &pred[0];
    const BoxSet* gb = gtb.empty() ? nullptr : &gtb[0];
    const OdLossResult od = od_loss(Heatmap::from_probabilities(probs), gt, pb, gb, cfg);
    const OcLossResult oc = oc_loss(logits, labels, cfg);
    const TotalLossResult t = total_loss(od, oc, cfg);
    out["value"] = t.value;
    out["od"] = od.value;
    out["oc"] = oc.value;
    save_grad(od.grad_heatmap, ".heatmap");
    save_grad(oc.grad_logits, ".logits");
    if (grad_check) {
      out["grad_check"] = fd_json(fd_check(
          logits, oc.grad_logits,
          [&](const Tensor& x) { return total_loss(od, oc_loss(x, labels, cfg), cfg).value; }, {}));
    }
  } else {
    throw std::invalid_argument("unknown loss kind '" + kind + "'");
  }
  return out;
}

void print_json(const Json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bevgrid: BEV lift-splat, occupancy labels, fusion, losses and metrics"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic scene and its labels");
  std::uint64_t seed = 0;
  std::string scene_cfg_path, out_dir;
  gen->add_option("--seed", seed, "Scene seed")->required();
  gen->add_option("--config", scene_cfg_path, "Scene config (JSON)");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* vox = app.add_subcommand("voxelize", "Binary or semantic occupancy labels");
  std::string spec_path, points_path, mode = "se", out_path;
  vox->add_option("--spec", spec_path, "Voxel grid spec (JSON)")->required();
  vox->add_option("--points", points_path, "Points or scene file")->required();
  vox->add_option("--mode", mode, "bo | se")->check(CLI::IsMember({"bo", "se"}));
  vox->add_option("--out", out_path, "Output grid file")->required();

  auto* ls = app.add_subcommand("lift-splat", "Current-frame BEV feature of a scene");
  std::string scene_path, grid_path, pipe_cfg_path;
  ls->add_option("--scene", scene_path, "Scene file")->required();
  ls->add_option("--grid", grid_path, "Voxel grid spec (JSON)")->required();
  ls->add_option("--config", pipe_cfg_path, "Pipeline config (JSON)");
  ls->add_option("--out", out_path, "Output grid file")->required();

  auto* fuse = app.add_subcommand("fuse", "Single-level modality fusion");
  std::string od_path, oc_path, adapters_path, out_od, out_oc;
  double lambda = 0.9;
  fuse->add_option("--od", od_path, "Detection feature grid")->required();
  fuse->add_option("--oc", oc_path, "Occupancy feature grid")->required();
  fuse->add_option("--lambda", lambda, "Fusion weight");
  fuse->add_option("--adapters", adapters_path, "Adapter pair (JSON); identity if omitted");
  fuse->add_option("--out-od", out_od, "Fused detection grid")->required();
  fuse->add_option("--out-oc", out_oc, "Fused occupancy grid")->required();

  auto* loss = app.add_subcommand("loss", "Evaluate a loss and its gradient");
  std::string kind;
  std::vector<std::string> inputs;
  bool grad_check = false;
  std::string grad_out;
  loss->add_option("--kind", kind, "focal | l1 | ce | lovasz | total")
      ->required()
      ->check(CLI::IsMember({"focal", "l1", "ce", "lovasz", "total"}));
  loss->add_option("--inputs", inputs, "Input files")->required();
  loss->add_flag("--grad-check", grad_check, "Compare against central finite differences");
  loss->add_option("--grad-out", grad_out, "Gradient grid file");

  auto* edet = app.add_subcommand("eval-det", "Detection metrics (mAP, TP errors, NDS)");
  std::string pred_path, gt_path;
  edet->add_option("--pred", pred_path, "Predicted boxes")->required();
  edet->add_option("--gt", gt_path, "Ground-truth boxes")->required();
  edet->add_option("--out", out_path, "Report file (JSON)");

  auto* eocc = app.add_subcommand("eval-occ", "Voxel mIoU");
  eocc->add_option("--pred", pred_path, "Predicted grid")->required();
  eocc->add_option("--gt", gt_path, "Ground-truth grid")->required();
  eocc->add_option("--out", out_path, "Report file (JSON)");

  auto* pipe = app.add_subcommand("pipeline", "End-to-end forward pass on a scene");
  std::string variant;
  double pipe_lambda = -1.0;
  int threads = -1;
  pipe->add_option("--scene", scene_path, "Scene file")->required();
  pipe->add_option("--config", pipe_cfg_path, "Pipeline config (JSON)");
  pipe->add_option("--out", out_dir, "Output directory")->required();
  pipe->add_option("--variant", variant, "bo | se")->check(CLI::IsMember({"bo", "se"}));
  pipe->add_option("--lambda", pipe_lambda, "Fusion weight");
  pipe->add_option("--threads", threads, "Worker threads (0 = all cores)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const SceneConfig cfg =
          scene_cfg_path.empty() ? SceneConfig{} : scene_config_from_json(load_json(scene_cfg_path));
      const Scene scene = generate_scene(seed, cfg);
      fs::create_directories(out_dir);
      save_scene(fs::path(out_dir) / "scene.txt", scene);
      save_boxes(fs::path(out_dir) / "boxes.txt", {scene.boxes});
      save_grid(fs::path(out_dir) / "occupancy_se.grid",
                GridFile::of(semantic_occupancy(cfg.grid, scene.cloud), cfg.grid));
      save_grid(fs::path(out_dir) / "occupancy_bo.grid",
                GridFile::of(binary_occupancy(cfg.grid, scene.cloud.points), cfg.grid));
      print_json({{"seed", seed},
                  {"points", scene.cloud.size()},
                  {"boxes", scene.boxes.size()},
                  {"out", out_dir}});
    } else if (vox->parsed()) {
      const VoxelGridSpec spec = voxel_spec_from_json(load_json(spec_path));
      const LabeledPointCloud cloud = load_cloud(points_path);
      if (mode == "bo") {
        const BinaryVoxelGrid g = binary_occupancy(spec, cloud.points);
        save_grid(out_path, GridFile::of(g, spec));
        print_json({{"mode", mode}, {"occupied", g.count()}});
      } else {
        const SemanticVoxelGrid g = semantic_occupancy(spec, cloud);
        save_grid(out_path, GridFile::of(g, spec));
        std::size_t labeled = 0;
        for (auto m : g.labeled_mask) labeled += m;
        print_json({{"mode", mode}, {"labeled", labeled}});
      }
    } else if (ls->parsed()) {
      PipelineConfig cfg;
      if (!pipe_cfg_path.empty()) {
        cfg = pipeline_config_from_json(load_json(pipe_cfg_path), fs::path(pipe_cfg_path).parent_path());
      }
      cfg.grid = voxel_spec_from_json(load_json(grid_path));
      const BevFeature bev = scene_bev(load_scene(scene_path), cfg);
      save_grid(out_path, GridFile::of(bev));
      print_json({{"shape", bev.values.shape()}, {"mass", bev.values.sum()}});
    } else if (fuse->parsed()) {
      const GridFile od = load_grid(od_path);
      const GridFile oc = load_grid(oc_path);
      if (od.kind != GridKind::kFeature || oc.kind != GridKind::kFeature) {
        throw std::invalid_argument("fuse expects feature grids");
      }
      AdapterPair pair = AdapterPair::identity(od.feature.dim(0));
      if (!adapters_path.empty()) {
        const Json j = load_json(adapters_path);
        pair = adapters_from_json({{"levels", {j, j, j}}})[0];
      }
      const BranchPair r =
          modality_fuse(od.feature, oc.feature, pair.occ_to_det, pair.det_to_occ, {lambda});
      GridFile fo = od, fc = oc;
      fo.feature = r.det;
      fc.feature = r.occ;
      save_grid(out_od, fo);
      save_grid(out_oc, fc);
      print_json({{"lambda", lambda}, {"shape", r.det.shape()}});
    } else if (loss->parsed()) {
      print_json(run_loss(kind, inputs, grad_check, grad_out));
    } else if (edet->parsed()) {
      const auto pred = load_boxes(pred_path);
      const auto gt = load_boxes(gt_path);
      if (pred.size() != gt.size()) {
        throw std::invalid_argument("prediction and ground truth frame counts differ");
      }
      std::vector<DetectionFrame> frames;
      for (std::size_t i = 0; i < pred.size(); ++i) frames.push_back({pred[i], gt[i]});
      const Json report = to_json(evaluate_detection(frames));
      if (!out_path.empty()) save_json(out_path, report);
      print_json(report);
    } else if (eocc->parsed()) {
      const Json report = to_json(voxel_miou(load_labels(pred_path), load_labels(gt_path)));
      if (!out_path.empty()) save_json(out_path, report);
      print_json(report);
    } else if (pipe->parsed()) {
      Json cfg_json = pipe_cfg_path.empty() ? Json::object() : load_json(pipe_cfg_path);
      if (!variant.empty()) cfg_json["variant"] = variant;
      if (pipe_lambda >= 0.0) cfg_json["lambda"] = pipe_lambda;
      if (threads >= 0) cfg_json["threads"] = threads;
      const PipelineConfig cfg = pipeline_config_from_json(
          cfg_json, pipe_cfg_path.empty() ? fs::path() : fs::path(pipe_cfg_path).parent_path(), false);
      const Scene scene = load_scene(scene_path);
      const PipelineResult r = run_forward(scene, cfg);
      const PipelineEvaluation ev = evaluate_forward(scene, r, cfg);
      save_pipeline_outputs(out_dir, r, ev, cfg);
      std::cout << format_trace(r.trace);
    }
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const FormatError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
