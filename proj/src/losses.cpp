#include "bevgrid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "bevgrid/classes.hpp"

namespace bevgrid {

LossConfig LossConfig::semantic() {
  LossConfig cfg;
  cfg.mu_oc = 1.0;
  cfg.class_weights.assign(kNumSemanticClasses, 1.0);
  return cfg;
}

LossConfig LossConfig::binary() {
  LossConfig cfg;
  cfg.mu_oc = 6.0;
  cfg.class_weights = {1.0, 2.0};
  return cfg;
}

void LossConfig::validate() const {
  const double scalars[] = {alpha, gamma, mu_od, mu_oc, omega};
  for (double v : scalars) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("LossConfig: alpha, gamma, mu_od, mu_oc and omega must be > 0");
    }
  }
  for (double w : class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("LossConfig: class weights must be > 0");
    }
  }
}

Heatmap Heatmap::from_probabilities(Tensor probs) {
  require_rank(probs, 3, "Heatmap");
  for (double& v : probs.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("Heatmap: values must be probabilities in [0, 1]");
    }
    v = std::clamp(v, kHeatmapClamp, 1.0 - kHeatmapClamp);
  }
  return Heatmap(std::move(probs));
}

void GtHeatmap::validate() const {
  require_rank(values, 3, "GtHeatmap");
  for (double v : values.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("GtHeatmap: values must lie in [0, 1]");
    }
  }
}

double gaussian_radius(double height, double width, double min_overlap) {
  const double a1 = 1.0;
  const double b1 = height + width;
  const double c1 = width * height * (1 - min_overlap) / (1 + min_overlap);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * a1 * c1)) / 2;

  const double a2 = 4.0;
  const double b2 = 2 * (height + width);
  const double c2 = (1 - min_overlap) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 4 * a2 * c2)) / 2;

  const double a3 = 4 * min_overlap;
  const double b3 = -2 * min_overlap * (height + width);
  const double c3 = (min_overlap - 1) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

GtHeatmap gt_heatmap(const BoxSet& boxes, const HeatmapGrid& grid, GtHeatmapMode mode,
                     int num_classes) {
  if (grid.nx < 1 || grid.ny < 1 || !(grid.cell_x > 0) || !(grid.cell_y > 0)) {
    throw std::invalid_argument("gt_heatmap: invalid heatmap grid");
  }
  GtHeatmap out{Tensor({static_cast<std::size_t>(num_classes), static_cast<std::size_t>(grid.nx),
                        static_cast<std::size_t>(grid.ny)})};
  const AxisRange ax{grid.x_min, grid.x_min + grid.nx * grid.cell_x, grid.cell_x};
  const AxisRange ay{grid.y_min, grid.y_min + grid.ny * grid.cell_y, grid.cell_y};
  for (std::size_t m = 0; m < boxes.size(); ++m) {
    const BoxRow& r = boxes.rows[m];
    const int cls = boxes.class_ids[m];
    if (cls < 0 || cls >= num_classes) {
      throw std::invalid_argument("gt_heatmap: class id " + std::to_string(cls) + " out of range");
    }
    const auto ci = axis_index(ax, grid.nx, r[kBoxX]);
    const auto cj = axis_index(ay, grid.ny, r[kBoxY]);
    if (!ci || !cj) continue;
    if (mode == GtHeatmapMode::kOneHot) {
      out.values(cls, *ci, *cj) = 1.0;
      continue;
    }
    const double len_cells = r[kBoxLength] / grid.cell_x;
    const double wid_cells = r[kBoxWidth] / grid.cell_y;
    const int radius = std::max(2, static_cast<int>(gaussian_radius(len_cells, wid_cells)));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    for (int dx = -radius; dx <= radius; ++dx) {
      for (int dy = -radius; dy <= radius; ++dy) {
        const int r2 = dx * dx + dy * dy;
        if (r2 > radius * radius) continue;
        const int i = *ci + dx, j = *cj + dy;
        if (i < 0 || j < 0 || i >= grid.nx || j >= grid.ny) continue;
        const double v = std::exp(-r2 / (2.0 * sigma * sigma));
        double& cell = out.values(cls, i, j);
        cell = std::max(cell, v);
      }
    }
  }
  return out;
}

LossValue gaussian_focal_loss(const Heatmap& h, const GtHeatmap& gt, const LossConfig& cfg) {
  cfg.validate();
  gt.validate();
  if (h.values().shape() != gt.values.shape()) {
    throw std::invalid_argument("gaussian_focal_loss: heatmap " +
                                shape_string(h.values().shape()) + " vs target " +
                                shape_string(gt.values.shape()));
  }
  const auto hv = h.values().data();
  const auto gv = gt.values.data();
  LossValue out{0.0, Tensor(h.values().shape())};
  auto grad = out.grad.data();
  std::size_t positives = 0;
  double total = 0.0;
  const double a = cfg.alpha;
  for (std::size_t i = 0; i < hv.size(); ++i) {
    const double p = hv[i];
    const double pos = std::floor(gv[i]);
    const double neg_w = std::pow(1.0 - gv[i], cfg.gamma);
    if (pos == 1.0) ++positives;
    const double log_p = std::log(p), log_q = std::log(1.0 - p);
    total += -pos * log_p * std::pow(1.0 - p, a) - neg_w * log_q * std::pow(p, a);
    const double d_pos = -std::pow(1.0 - p, a) / p + a * log_p * std::pow(1.0 - p, a - 1.0);
    const double d_neg = std::pow(p, a) / (1.0 - p) - a * log_q * std::pow(p, a - 1.0);
    grad[i] = pos * d_pos + neg_w * d_neg;
  }
  const double norm = static_cast<double>(std::max<std::size_t>(1, positives));
  out.value = total / norm;
  for (double& g : grad) g /= norm;
  return out;
}

BoxLossValue l1_box_loss(const BoxSet& pred, const BoxSet& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("l1_box_loss: " + std::to_string(pred.size()) +
                                " predictions vs " + std::to_string(gt.size()) + " targets");
  }
  if (pred.empty()) throw std::invalid_argument("l1_box_loss: no matched boxes");
  const double m = static_cast<double>(pred.size());
  BoxLossValue out{0.0, std::vector<BoxRow>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int k = 0; k < kBoxDims; ++k) {
      const double diff = pred.rows[i][k] - gt.rows[i][k];
      out.value += std::abs(diff);
      out.grad[i][k] = diff > 0 ? 1.0 / m : (diff < 0 ? -1.0 / m : 0.0);
    }
  }
  out.value /= m;
  return out;
}

namespace {

std::size_t voxels_of(const Tensor& t, std::size_t classes, const char* what) {
  if (t.rank() < 2 || t.dim(0) != classes || t.size() == 0) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(classes) +
                                " class planes, got shape " + shape_string(t.shape()));
  }
  return t.size() / classes;
}

}  // namespace

LossValue weighted_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels,
                                 std::span<const std::uint8_t> mask,
                                 std::span<const double> class_weights) {
  const std::size_t classes = class_weights.size();
  if (classes < 2) throw std::invalid_argument("weighted_cross_entropy: need >= 2 class weights");
  const std::size_t v_count = voxels_of(logits, classes, "weighted_cross_entropy");
  if (labels.size() != v_count || mask.size() != v_count) {
    throw std::invalid_argument("weighted_cross_entropy: labels/mask length differs from voxel count");
  }
  const auto z = logits.data();
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument("weighted_cross_entropy: non-finite logit");
  }
  std::size_t count = 0;
  for (std::size_t v = 0; v < v_count; ++v) count += mask[v] ? 1 : 0;
  if (count == 0) throw std::invalid_argument("weighted_cross_entropy: no contributing voxels");

  LossValue out{0.0, Tensor(logits.shape())};
  auto grad = out.grad.data();
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<double> p(classes);
  for (std::size_t v = 0; v < v_count; ++v) {
    if (!mask[v]) continue;
    const int y = labels[v];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument("weighted_cross_entropy: label " + std::to_string(y) +
                                  " out of range");
    }
    double zmax = z[v];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c * v_count + v]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(z[c * v_count + v] - zmax);
      denom += p[c];
    }
    const double lse = zmax + std::log(denom);
    const double w = class_weights[static_cast<std::size_t>(y)];
    out.value += w * (lse - z[static_cast<std::size_t>(y) * v_count + v]);
    for (std::size_t c = 0; c < classes; ++c) {
      const double pc = p[c] / denom;
      grad[c * v_count + v] = w * inv * (pc - (static_cast<int>(c) == y ? 1.0 : 0.0));
    }
  }
  out.value *= inv;
  return out;
}

LossValue weighted_cross_entropy(const Tensor& logits, const SemanticVoxelGrid& labels,
                                 const LossConfig& cfg) {
  cfg.validate();
  return weighted_cross_entropy(logits, labels.class_ids, labels.labeled_mask, cfg.class_weights);
}

LossValue weighted_cross_entropy(const Tensor& logits, const BinaryVoxelGrid& labels,
                                 const LossConfig& cfg) {
  return weighted_cross_entropy(logits, to_semantic(labels), cfg);
}

LossValue lovasz_softmax(const Tensor& probs, std::span<const std::int32_t> labels,
                         std::span<const std::uint8_t> mask, bool check_simplex) {
  if (probs.rank() < 2 || probs.dim(0) < 1) {
    throw std::invalid_argument("lovasz_softmax: expected O x V probabilities");
  }
  const std::size_t classes = probs.dim(0);
  const std::size_t v_count = probs.size() / classes;
  if (labels.size() != v_count || mask.size() != v_count) {
    throw std::invalid_argument("lovasz_softmax: labels/mask length differs from voxel count");
  }
  const auto p = probs.data();

  std::vector<std::size_t> voxels;
  std::vector<char> present(classes, 0);
  for (std::size_t v = 0; v < v_count; ++v) {
    if (!mask[v]) continue;
    const int y = labels[v];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument("lovasz_softmax: label " + std::to_string(y) + " out of range");
    }
    if (check_simplex) {
      double s = 0.0;
      for (std::size_t c = 0; c < classes; ++c) s += p[c * v_count + v];
      if (std::abs(s - 1.0) > 1e-6) {
        throw std::invalid_argument("lovasz_softmax: probabilities of voxel " + std::to_string(v) +
                                    " sum to " + std::to_string(s));
      }
    }
    present[static_cast<std::size_t>(y)] = 1;
    voxels.push_back(v);
  }
  if (voxels.empty()) throw std::invalid_argument("lovasz_softmax: every voxel is masked out");

  LossValue out{0.0, Tensor(probs.shape())};
  auto grad = out.grad.data();
  const std::size_t n = voxels.size();
  std::vector<double> err(n);
  std::vector<std::size_t> order(n);
  std::vector<double> lgrad(n);
  std::size_t n_present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!present[c]) continue;
    ++n_present;
    double gts = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t v = voxels[k];
      const bool fg = labels[v] == static_cast<int>(c);
      gts += fg ? 1.0 : 0.0;
      err[k] = fg ? 1.0 - p[c * v_count + v] : p[c * v_count + v];
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
    // Lovasz extension weights of the Jaccard loss along the sorted order.
    double cum_fg = 0.0, cum_bg = 0.0, prev = 0.0, loss_c = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t k = order[r];
      const bool fg = labels[voxels[k]] == static_cast<int>(c);
      (fg ? cum_fg : cum_bg) += 1.0;
      const double jaccard = 1.0 - (gts - cum_fg) / (gts + cum_bg);
      lgrad[r] = jaccard - prev;
      prev = jaccard;
      loss_c += err[k] * lgrad[r];
    }
    out.value += loss_c;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t v = voxels[order[r]];
      const bool fg = labels[v] == static_cast<int>(c);
      grad[c * v_count + v] = fg ? -lgrad[r] : lgrad[r];
    }
  }
  const double inv = 1.0 / static_cast<double>(n_present);
  out.value *= inv;
  for (double& g : grad) g *= inv;
  return out;
}

LossValue lovasz_softmax(const Tensor& probs, const SemanticVoxelGrid& labels) {
  return lovasz_softmax(probs, labels.class_ids, labels.labeled_mask);
}

Tensor softmax_classes(const Tensor& logits) {
  if (logits.rank() < 2) throw std::invalid_argument("softmax_classes: expected O x V");
  const std::size_t classes = logits.dim(0);
  const std::size_t v_count = logits.size() / classes;
  Tensor out(logits.shape());
  const auto z = logits.data();
  auto p = out.data();
  for (std::size_t v = 0; v < v_count; ++v) {
    double zmax = z[v];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c * v_count + v]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c * v_count + v] = std::exp(z[c * v_count + v] - zmax);
      denom += p[c * v_count + v];
    }
    for (std::size_t c = 0; c < classes; ++c) p[c * v_count + v] /= denom;
  }
  return out;
}

Tensor softmax_classes_backward(const Tensor& probs, const Tensor& grad_probs) {
  if (probs.shape() != grad_probs.shape()) {
    throw std::invalid_argument("softmax_classes_backward: shape mismatch");
  }
  const std::size_t classes = probs.dim(0);
  const std::size_t v_count = probs.size() / classes;
  Tensor out(probs.shape());
  const auto p = probs.data();
  const auto g = grad_probs.data();
  auto dz = out.data();
  for (std::size_t v = 0; v < v_count; ++v) {
    double dot = 0.0;
    for (std::size_t c = 0; c < classes; ++c) dot += p[c * v_count + v] * g[c * v_count + v];
    for (std::size_t c = 0; c < classes; ++c) {
      dz[c * v_count + v] = p[c * v_count + v] * (g[c * v_count + v] - dot);
    }
  }
  return out;
}

double od_loss(double focal, double l1, const LossConfig& cfg) { return focal + cfg.mu_od * l1; }
double oc_loss(double lovasz, double ce, const LossConfig& cfg) { return lovasz + cfg.mu_oc * ce; }
double total_loss(double od, double oc, const LossConfig& cfg) { return od + cfg.omega * oc; }

OdLossResult od_loss(const Heatmap& h, const GtHeatmap& gt, const BoxSet* pred_boxes,
                     const BoxSet* gt_boxes, const LossConfig& cfg) {
  OdLossResult out;
  LossValue focal = gaussian_focal_loss(h, gt, cfg);
  out.focal = focal.value;
  out.grad_heatmap = std::move(focal.grad);
  if (pred_boxes && gt_boxes && !pred_boxes->empty()) {
    BoxLossValue l1 = l1_box_loss(*pred_boxes, *gt_boxes);
    out.l1 = l1.value;
    out.grad_boxes = std::move(l1.grad);
    for (BoxRow& row : out.grad_boxes) {
      for (double& g : row) g *= cfg.mu_od;
    }
  }
  out.value = od_loss(out.focal, out.l1, cfg);
  return out;
}

OcLossResult oc_loss(const Tensor& logits, const SemanticVoxelGrid& labels,
                     const LossConfig& cfg) {
  cfg.validate();
  if (cfg.class_weights.size() != static_cast<std::size_t>(labels.num_classes)) {
    throw std::invalid_argument("oc_loss: " + std::to_string(cfg.class_weights.size()) +
                                " class weights for " + std::to_string(labels.num_classes) +
                                " classes");
  }
  OcLossResult out;
  const Tensor probs = softmax_classes(logits);
  // The softmax output sums to one up to rounding; skip the simplex check.
  LossValue lova = lovasz_softmax(probs, labels.class_ids, labels.labeled_mask, false);
  LossValue ce = weighted_cross_entropy(logits, labels, cfg);
  out.lovasz = lova.value;
  out.ce = ce.value;
  out.value = oc_loss(out.lovasz, out.ce, cfg);
  out.grad_logits = softmax_classes_backward(probs, lova.grad);
  auto g = out.grad_logits.data();
  const auto gce = ce.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.mu_oc * gce[i];
  return out;
}

TotalLossResult total_loss(const OdLossResult& od, const OcLossResult& oc,
                           const LossConfig& cfg) {
  return {total_loss(od.value, oc.value, cfg), od, oc};
}

}  // namespace bevgrid
