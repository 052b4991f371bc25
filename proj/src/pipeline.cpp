#include "bevgrid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "bevgrid/classes.hpp"
#include "bevgrid/parallel.hpp"

namespace bevgrid {

const char* variant_name(OccVariant v) { return v == OccVariant::kBinary ? "bo" : "se"; }

OccVariant parse_variant(const std::string& name) {
  if (name == "bo") return OccVariant::kBinary;
  if (name == "se") return OccVariant::kSemantic;
  throw std::invalid_argument("unknown occupancy variant '" + name + "' (expected bo or se)");
}

int PipelineConfig::num_occ_classes() const {
  return variant == OccVariant::kBinary ? kNumBinaryClasses : kNumSemanticClasses;
}

LossConfig PipelineConfig::loss_config() const {
  if (loss) return *loss;
  return variant == OccVariant::kBinary ? LossConfig::binary() : LossConfig::semantic();
}

std::array<AdapterPair, 3> PipelineConfig::adapter_pairs() const {
  if (adapters) return *adapters;
  const auto c = static_cast<std::size_t>(task_channels);
  return {AdapterPair::identity(c), AdapterPair::identity(c), AdapterPair::identity(c)};
}

void PipelineConfig::validate() const {
  depth_bins.validate();
  fusion.validate();
  if (feature_height < 1 || feature_width < 1) {
    throw std::invalid_argument("feature map size must be positive");
  }
  if (bev_channels < 1 || task_channels < 1) {
    throw std::invalid_argument("channel widths must be positive");
  }
  if (grid.nx() % 8 != 0 || grid.ny() % 8 != 0) {
    throw std::invalid_argument("BEV grid " + std::to_string(grid.nx()) + "x" +
                                std::to_string(grid.ny()) +
                                " must be divisible by 8 for the 1/8 pyramid level");
  }
  if (max_detections < 0) throw std::invalid_argument("max_detections must be >= 0");
  if (!(score_min >= 0.0 && score_min < 1.0)) {
    throw std::invalid_argument("score_min must lie in [0, 1)");
  }
  const LossConfig lc = loss_config();
  lc.validate();
  if (static_cast<int>(lc.class_weights.size()) != num_occ_classes()) {
    throw std::invalid_argument("loss config has " + std::to_string(lc.class_weights.size()) +
                                " class weights, variant " + variant_name(variant) + " needs " +
                                std::to_string(num_occ_classes()));
  }
  if (adapters) {
    const auto c = static_cast<std::size_t>(task_channels);
    for (const AdapterPair& p : *adapters) {
      for (const FusionAdapter* a : {&p.occ_to_det, &p.det_to_occ}) {
        a->validate();
        if (a->in_channels() != c || a->out_channels() != c) {
          throw std::invalid_argument("adapter is " + shape_string(a->weight.shape()) +
                                      ", task stage width is " + std::to_string(c));
        }
      }
    }
  }
}

ContractViolation::ContractViolation(std::string stage, const std::string& message)
    : std::runtime_error("stage '" + stage + "': " + message), stage_(std::move(stage)) {}

namespace {

using Shape = std::vector<std::size_t>;

constexpr std::size_t kNumDetClasses = kDetectionClassNames.size();

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

std::vector<StageShape> expected_trace(const PipelineConfig& cfg, std::size_t num_cameras) {
  const std::size_t n = num_cameras, c = sz(cfg.bev_channels), ct = sz(cfg.task_channels);
  const std::size_t h = sz(cfg.feature_height), w = sz(cfg.feature_width);
  const std::size_t d = sz(cfg.depth_bins.count);
  const std::size_t x = sz(cfg.grid.nx()), y = sz(cfg.grid.ny()), z = sz(cfg.grid.nz());
  const std::size_t o = sz(cfg.num_occ_classes());
  std::vector<StageShape> t = {
      {"image_features", {n, c, h, w}},
      {"depth", {n, d, h, w}},
      {"bev", {c, x, y}},
      {"image_features_adj", {n, c, h, w}},
      {"depth_adj", {n, d, h, w}},
      {"bev_adj", {c, x, y}},
      {"temporal", {2 * c, x, y}},
  };
  const bool occ = !cfg.disable_occ_branch;
  for (const char* branch : {"det", "occ"}) {
    if (!occ && std::string(branch) == "occ") continue;
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t f = std::size_t{2} << k;
      t.push_back({std::string(branch) + "_level" + std::to_string(k), {ct, x / f, y / f}});
    }
  }
  t.push_back({"fused_det", {ct, x, y}});
  if (occ) t.push_back({"fused_occ", {ct, x, y}});
  t.push_back({"heatmap", {kNumDetClasses, x, y}});
  t.push_back({"regression", {std::size_t{kBoxDims}, x, y}});
  if (occ) {
    t.push_back({"occ_logits", {o, x, y, z}});
    t.push_back({"occupancy", {x, y, z}});
  }
  return t;
}

std::string format_trace(const std::vector<StageShape>& trace) {
  std::ostringstream os;
  for (const StageShape& s : trace) {
    os << s.stage << ' ';
    for (std::size_t i = 0; i < s.shape.size(); ++i) os << (i ? "x" : "") << s.shape[i];
    os << '\n';
  }
  return os.str();
}

namespace {

// Fixed pseudo-random stand-in weights: uniform(-1, 1) / sqrt(fan_in).
Tensor seeded_weights(std::size_t rows, std::size_t cols, std::uint64_t seed,
                      std::uint64_t salt) {
  SceneRng rng(seed * 0x9E3779B97F4A7C15ULL + salt);
  Tensor w({rows, cols});
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& v : w.storage()) v = rng.uniform(-1.0, 1.0) * scale;
  return w;
}

enum WeightSalt : std::uint64_t {
  kSaltBackbone = 1,
  kSaltTaskDet,
  kSaltTaskOcc,
  kSaltHeatmap,
  kSaltRegression,
  kSaltOcc,
};

// out[o, p] = sum_i w[o, i] * f[i, p] over the flattened trailing axes of f.
// Each output channel has one writer and a fixed summation order.
Tensor mix_channels(const Tensor& w, const Tensor& f, int threads) {
  const std::size_t cout = w.dim(0), cin = w.dim(1);
  if (f.dim(0) != cin) {
    throw std::invalid_argument("channel mix expects " + std::to_string(cin) +
                                " input channels, got " + shape_string(f.shape()));
  }
  Shape shape = f.shape();
  shape[0] = cout;
  Tensor out(shape);
  const std::size_t plane = f.size() / cin;
  const double* src = f.storage().data();
  const double* wd = w.storage().data();
  double* dst = out.storage().data();
  parallel_for(cout, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t o = begin; o < end; ++o) {
      double* row = dst + o * plane;
      for (std::size_t i = 0; i < cin; ++i) {
        const double wi = wd[o * cin + i];
        const double* in = src + i * plane;
        for (std::size_t p = 0; p < plane; ++p) row[p] += wi * in[p];
      }
    }
  });
  return out;
}

void relu_inplace(Tensor& t) {
  for (double& v : t.storage()) v = std::max(v, 0.0);
}

// 2x2 mean pooling of a C x X x Y plane.
Tensor avg_pool2(const Tensor& f) {
  const std::size_t c = f.dim(0), x = f.dim(1) / 2, y = f.dim(2) / 2;
  Tensor out({c, x, y});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < x; ++i) {
      for (std::size_t j = 0; j < y; ++j) {
        out(k, i, j) = 0.25 * (f(k, 2 * i, 2 * j) + f(k, 2 * i, 2 * j + 1) +
                               f(k, 2 * i + 1, 2 * j) + f(k, 2 * i + 1, 2 * j + 1));
      }
    }
  }
  return out;
}

// Linear map of the one-hot label of the nearest point in each feature cell.
ImageFeature backbone(const CameraRig& rig, const LabeledPointCloud& cloud,
                      const PipelineConfig& cfg, const Tensor& weights) {
  const std::size_t n = rig.size(), c = sz(cfg.bev_channels);
  const std::size_t h = sz(cfg.feature_height), w = sz(cfg.feature_width);
  ImageFeature out{Tensor({n, c, h, w})};
  for (std::size_t cam = 0; cam < n; ++cam) {
    const auto nearest =
        nearest_points(rig, cloud.points, cam, cfg.feature_height, cfg.feature_width);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        const std::ptrdiff_t idx = nearest[r * w + col];
        if (idx < 0) continue;
        const auto label = static_cast<std::size_t>(cloud.labels[static_cast<std::size_t>(idx)]);
        for (std::size_t k = 0; k < c; ++k) out.values(cam, k, r, col) = weights(k, label);
      }
    }
  }
  return out;
}

PyramidFeatures task_stage(const Tensor& temporal, const Tensor& weights, int threads) {
  Tensor full = mix_channels(weights, temporal, threads);
  relu_inplace(full);
  PyramidFeatures p;
  p.levels[0] = avg_pool2(full);
  p.levels[1] = avg_pool2(p.levels[0]);
  p.levels[2] = avg_pool2(p.levels[1]);
  return p;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

class StageRunner {
 public:
  explicit StageRunner(const std::vector<StageShape>& expected) {
    for (const StageShape& s : expected) expected_[s.stage] = s.shape;
  }

  template <class F>
  auto run(const std::string& name, F&& fn) {
    try {
      return fn();
    } catch (const ContractViolation&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ContractViolation(name, e.what());
    } catch (const std::out_of_range& e) {
      throw ContractViolation(name, e.what());
    }
  }

  void record(const std::string& name, const Shape& shape) {
    auto it = expected_.find(name);
    if (it != expected_.end() && it->second != shape) {
      throw ContractViolation(name, "produced " + shape_string(shape) + ", expected " +
                                        shape_string(it->second));
    }
    trace.push_back({name, shape});
  }

  std::vector<StageShape> trace;

 private:
  std::map<std::string, Shape> expected_;
};

}  // namespace

BoxSet decode_heatmap(const Tensor& heatmap, const Tensor& regression, const BevGrid& grid,
                      int k, double score_min) {
  require_rank(heatmap, 3, "heatmap");
  require_rank(regression, 3, "regression planes");
  const std::size_t classes = heatmap.dim(0), nx = heatmap.dim(1), ny = heatmap.dim(2);
  if (regression.dim(0) != std::size_t{kBoxDims} || regression.dim(1) != nx ||
      regression.dim(2) != ny) {
    throw std::invalid_argument("regression planes " + shape_string(regression.shape()) +
                                " do not match heatmap " + shape_string(heatmap.shape()));
  }
  if (nx != sz(grid.nx) || ny != sz(grid.ny)) {
    throw std::invalid_argument("heatmap " + shape_string(heatmap.shape()) +
                                " does not match the BEV grid");
  }
  struct Peak {
    double score;
    std::size_t cls, row, col;
  };
  std::vector<Peak> peaks;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        const double v = heatmap(c, i, j);
        if (!(v > score_min)) continue;
        bool peak = true;
        for (int di = -1; di <= 1 && peak; ++di) {
          for (int dj = -1; dj <= 1 && peak; ++dj) {
            if (di == 0 && dj == 0) continue;
            const long ni = static_cast<long>(i) + di, nj = static_cast<long>(j) + dj;
            if (ni < 0 || nj < 0 || ni >= static_cast<long>(nx) || nj >= static_cast<long>(ny)) {
              continue;
            }
            const double u = heatmap(c, static_cast<std::size_t>(ni), static_cast<std::size_t>(nj));
            const bool earlier = di < 0 || (di == 0 && dj < 0);
            peak = earlier ? v > u : v >= u;
          }
        }
        if (peak) peaks.push_back({v, c, i, j});
      }
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (k >= 0 && peaks.size() > sz(k)) peaks.resize(sz(k));

  BoxSet out;
  for (const Peak& p : peaks) {
    BoxRow row{};
    for (std::size_t f = 0; f < std::size_t{kBoxDims}; ++f) row[f] = regression(f, p.row, p.col);
    row[kBoxX] = grid.x.min + (static_cast<double>(p.row) + row[kBoxX]) * grid.x.resolution;
    row[kBoxY] = grid.y.min + (static_cast<double>(p.col) + row[kBoxY]) * grid.y.resolution;
    out.add(row, static_cast<int>(p.cls), p.score);
  }
  return out;
}

BevFeature scene_bev(const Scene& scene, const PipelineConfig& cfg) {
  const Tensor w = seeded_weights(sz(cfg.bev_channels), sz(kNumSemanticClasses), cfg.weight_seed,
                                  kSaltBackbone);
  const ImageFeature feat = backbone(scene.rig, scene.cloud, cfg, w);
  const DepthDistribution depth = oracle_depth_all(scene.rig, scene.cloud.points,
                                                   cfg.feature_height, cfg.feature_width,
                                                   cfg.depth_bins);
  return lift_splat(feat, depth, scene.rig, cfg.grid, cfg.threads);
}

PipelineResult run_forward(const Scene& scene, const PipelineConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ContractViolation("config", e.what());
  }
  StageRunner s(expected_trace(cfg, scene.rig.size()));
  s.run("scene", [&] {
    scene.cloud.validate();
    scene.boxes.validate();
    return 0;
  });
  const int threads = cfg.threads;
  const std::size_t c = sz(cfg.bev_channels), ct = sz(cfg.task_channels);
  const std::size_t x = sz(cfg.grid.nx()), y = sz(cfg.grid.ny()), z = sz(cfg.grid.nz());
  const std::size_t o = sz(cfg.num_occ_classes());
  const Tensor w_backbone =
      seeded_weights(c, sz(kNumSemanticClasses), cfg.weight_seed, kSaltBackbone);

  const RigidTransform motion = ego_motion(scene);
  LabeledPointCloud adj_cloud{transform_points(motion, scene.cloud.points), scene.cloud.labels};

  auto lift = [&](const LabeledPointCloud& cloud, const std::string& suffix) {
    ImageFeature feat = s.run("image_features" + suffix,
                              [&] { return backbone(scene.rig, cloud, cfg, w_backbone); });
    s.record("image_features" + suffix, feat.values.shape());
    DepthDistribution depth = s.run("depth" + suffix, [&] {
      DepthDistribution d = oracle_depth_all(scene.rig, cloud.points, cfg.feature_height,
                                             cfg.feature_width, cfg.depth_bins);
      d.validate();
      return d;
    });
    s.record("depth" + suffix, depth.values.shape());
    BevFeature bev = s.run("bev" + suffix, [&] {
      return lift_splat(feat, depth, scene.rig, cfg.grid, threads);
    });
    s.record("bev" + suffix, bev.values.shape());
    return bev;
  };
  const BevFeature bev_curr = lift(scene.cloud, "");
  const BevFeature bev_adj = lift(adj_cloud, "_adj");

  PipelineResult r;
  r.bev = s.run("temporal", [&] { return temporal_concat(bev_curr, bev_adj, motion); });
  s.record("temporal", r.bev.values.shape());

  auto pyramid = [&](const std::string& branch, WeightSalt salt) {
    const Tensor w = seeded_weights(ct, 2 * c, cfg.weight_seed, salt);
    PyramidFeatures p = s.run(branch + "_level0", [&] {
      PyramidFeatures out = task_stage(r.bev.values, w, threads);
      out.validate();
      return out;
    });
    for (std::size_t k = 0; k < 3; ++k) {
      s.record(branch + "_level" + std::to_string(k), p.levels[k].shape());
    }
    return p;
  };
  const PyramidFeatures det = pyramid("det", kSaltTaskDet);
  if (cfg.disable_occ_branch) {
    r.fused_det = s.run("fused_det", [&] { return pyramid_decode(det); });
    s.record("fused_det", r.fused_det.shape());
  } else {
    const PyramidFeatures occ = pyramid("occ", kSaltTaskOcc);
    const std::array<AdapterPair, 3> adapters = cfg.adapter_pairs();
    BranchPair fused = s.run("fused_det", [&] {
      return pyramid_fuse(det, occ, std::span<const AdapterPair, 3>(adapters), cfg.fusion);
    });
    r.fused_det = std::move(fused.det);
    r.fused_occ = std::move(fused.occ);
    s.record("fused_det", r.fused_det.shape());
    s.record("fused_occ", r.fused_occ.shape());
  }

  r.heatmap = s.run("heatmap", [&] {
    Tensor logits = mix_channels(seeded_weights(kNumDetClasses, ct, cfg.weight_seed, kSaltHeatmap),
                                 r.fused_det, threads);
    for (double& v : logits.storage()) v = v > 0.0 ? -std::expm1(-v) : 0.0;
    return logits;
  });
  s.record("heatmap", r.heatmap.shape());

  r.regression = s.run("regression", [&] {
    Tensor raw = mix_channels(seeded_weights(kBoxDims, ct, cfg.weight_seed, kSaltRegression),
                              r.fused_det, threads);
    for (std::size_t i = 0; i < x; ++i) {
      for (std::size_t j = 0; j < y; ++j) {
        raw(kBoxX, i, j) = sigmoid(raw(kBoxX, i, j));
        raw(kBoxY, i, j) = sigmoid(raw(kBoxY, i, j));
        for (std::size_t f : {std::size_t{kBoxLength}, std::size_t{kBoxWidth},
                              std::size_t{kBoxHeight}}) {
          raw(f, i, j) = std::exp(std::clamp(raw(f, i, j), -5.0, 5.0));
        }
        const double sn = raw(kBoxSinYaw, i, j), cs = raw(kBoxCosYaw, i, j);
        const double norm = std::hypot(sn, cs);
        raw(kBoxSinYaw, i, j) = norm > 0.0 ? sn / norm : 0.0;
        raw(kBoxCosYaw, i, j) = norm > 0.0 ? cs / norm : 1.0;
        raw(kBoxAttr, i, j) = -1.0;
      }
    }
    return raw;
  });
  s.record("regression", r.regression.shape());

  r.boxes = s.run("boxes", [&] {
    return decode_heatmap(r.heatmap, r.regression, BevGrid::from(cfg.grid), cfg.max_detections,
                          cfg.score_min);
  });
  s.record("boxes", {r.boxes.size(), std::size_t{kBoxDims}});

  if (!cfg.disable_occ_branch) {
    r.occ_logits = s.run("occ_logits", [&] {
      const Tensor m =
          mix_channels(seeded_weights(o * z, ct, cfg.weight_seed, kSaltOcc), r.fused_occ, threads);
      Tensor logits({o, x, y, z});
      for (std::size_t cls = 0; cls < o; ++cls) {
        for (std::size_t i = 0; i < x; ++i) {
          for (std::size_t j = 0; j < y; ++j) {
            for (std::size_t k = 0; k < z; ++k) logits(cls, i, j, k) = m(cls * z + k, i, j);
          }
        }
      }
      return logits;
    });
    s.record("occ_logits", r.occ_logits.shape());

    r.occupancy = s.run("occupancy", [&] {
      SemanticVoxelGrid g(cfg.grid.dims(), static_cast<int>(o));
      const std::size_t v = x * y * z;
      const double* logits = r.occ_logits.storage().data();
      for (std::size_t i = 0; i < v; ++i) {
        std::size_t best = 0;
        for (std::size_t cls = 1; cls < o; ++cls) {
          if (logits[cls * v + i] > logits[best * v + i]) best = cls;
        }
        g.class_ids[i] = static_cast<std::int32_t>(best);
        g.labeled_mask[i] = 1;
      }
      g.validate();
      return g;
    });
    s.record("occupancy", {x, y, z});
  }
  r.trace = std::move(s.trace);
  return r;
}

SemanticVoxelGrid occupancy_labels(const Scene& scene, const PipelineConfig& cfg) {
  if (cfg.variant == OccVariant::kBinary) {
    return to_semantic(binary_occupancy(cfg.grid, scene.cloud.points));
  }
  return semantic_occupancy(cfg.grid, scene.cloud);
}

PipelineEvaluation evaluate_forward(const Scene& scene, const PipelineResult& result,
                                    const PipelineConfig& cfg) {
  const LossConfig lc = cfg.loss_config();
  const BevGrid bev = BevGrid::from(cfg.grid);
  const HeatmapGrid hg{bev.nx, bev.ny, bev.x.min, bev.y.min, bev.x.resolution, bev.y.resolution};
  const GtHeatmap gt = gt_heatmap(scene.boxes, hg, GtHeatmapMode::kGaussian);

  const MatchResult m = match_by_center_distance(result.boxes, scene.boxes, kTpThreshold);
  BoxSet pred_matched, gt_matched;
  for (const Match& mt : m.matches) {
    pred_matched.add(result.boxes.rows[mt.pred], result.boxes.class_ids[mt.pred],
                     result.boxes.scores[mt.pred]);
    gt_matched.add(scene.boxes.rows[mt.gt], scene.boxes.class_ids[mt.gt]);
  }

  PipelineEvaluation ev;
  ev.od = od_loss(Heatmap::from_probabilities(result.heatmap), gt, &pred_matched, &gt_matched, lc);
  ev.total = ev.od.value;
  if (result.occupancy) {
    const SemanticVoxelGrid labels = occupancy_labels(scene, cfg);
    const std::size_t o = result.occ_logits.dim(0);
    Tensor flat({o, result.occ_logits.size() / o});
    flat.storage() = result.occ_logits.storage();
    ev.oc = oc_loss(flat, labels, lc);
    ev.total = total_loss(ev.od, *ev.oc, lc).value;
    ev.occupancy = voxel_miou(*result.occupancy, labels);
  }
  const std::vector<DetectionFrame> frames = {{result.boxes, scene.boxes}};
  ev.detection = evaluate_detection(frames);
  return ev;
}

}  // namespace bevgrid
