#include "bevgrid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

namespace bevgrid {

MiouResult voxel_miou(const SemanticVoxelGrid& pred, const SemanticVoxelGrid& gt) {
  if (pred.dims != gt.dims) throw std::invalid_argument("voxel_miou: grid dims differ");
  pred.validate();
  gt.validate();
  const int classes = std::max(pred.num_classes, gt.num_classes);
  std::vector<std::size_t> inter(static_cast<std::size_t>(classes), 0);
  std::vector<std::size_t> uni(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.labeled_mask[i]) continue;
    const auto p = static_cast<std::size_t>(pred.class_ids[i]);
    const auto g = static_cast<std::size_t>(gt.class_ids[i]);
    if (p == g) {
      ++inter[p];
      ++uni[p];
    } else {
      ++uni[p];
      ++uni[g];
    }
  }
  MiouResult out;
  out.per_class.resize(static_cast<std::size_t>(classes));
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < uni.size(); ++c) {
    if (uni[c] == 0) continue;
    const double iou = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    out.per_class[c] = iou;
    sum += iou;
    ++present;
  }
  if (present > 0) out.miou = sum / present;
  return out;
}

double center_distance(const BoxRow& a, const BoxRow& b) {
  return std::hypot(a[kBoxX] - b[kBoxX], a[kBoxY] - b[kBoxY]);
}

namespace {

std::vector<std::size_t> score_order(const BoxSet& boxes) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes.scores[a] > boxes.scores[b];
  });
  return order;
}

// numpy.interp: xp non-decreasing; x left of xp[0] -> left, right of xp.back()
// -> right.
double np_interp(double x, const std::vector<double>& xp, const std::vector<double>& fp,
                 double left, double right) {
  const std::size_t n = xp.size();
  if (x > xp[n - 1]) return right;
  if (x < xp[0]) return left;
  if (x == xp[n - 1]) return fp[n - 1];
  // Largest j with xp[j] <= x.
  const std::size_t j =
      static_cast<std::size_t>(std::upper_bound(xp.begin(), xp.end(), x) - xp.begin()) - 1;
  if (xp[j] == x) return fp[j];
  const double slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
  return slope * (x - xp[j]) + fp[j];
}

double angle_diff(double a, double b, double period) {
  double diff = std::fmod(a - b + period / 2, period);
  if (diff < 0) diff += period;  // Python modulo semantics
  diff -= period / 2;
  if (diff > std::numbers::pi) diff -= 2 * std::numbers::pi;
  return std::abs(diff);
}

double scale_iou(const BoxRow& a, const BoxRow& b) {
  double inter = 1.0, va = 1.0, vb = 1.0;
  for (int k = kBoxLength; k <= kBoxHeight; ++k) {
    inter *= std::min(a[k], b[k]);
    va *= a[k];
    vb *= b[k];
  }
  return inter / (va + vb - inter);
}

// NaN-aware cumulative mean; an all-NaN input yields ones.
std::vector<double> cummean(const std::vector<double>& x) {
  std::vector<double> out(x.size(), 1.0);
  if (std::all_of(x.begin(), x.end(), [](double v) { return std::isnan(v); })) return out;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isnan(x[i])) {
      sum += x[i];
      ++count;
    }
    out[i] = count ? sum / static_cast<double>(count) : 0.0;
  }
  return out;
}

bool metric_applies(int class_id, TpMetric m) {
  if (class_id == detection::kTrafficCone) {
    return m == TpMetric::kTranslation || m == TpMetric::kScale;
  }
  if (class_id == detection::kBarrier) {
    return m != TpMetric::kVelocity && m != TpMetric::kAttribute;
  }
  return true;
}

}  // namespace

MatchResult match_by_center_distance(const BoxSet& pred, const BoxSet& gt, double threshold) {
  MatchResult out;
  std::vector<char> taken(gt.size(), 0);
  for (std::size_t p : score_order(pred)) {
    double best = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> best_gt;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g] || gt.class_ids[g] != pred.class_ids[p]) continue;
      const double d = center_distance(pred.rows[p], gt.rows[g]);
      if (d < best) {
        best = d;
        best_gt = g;
      }
    }
    if (best_gt && best < threshold) {
      taken[*best_gt] = 1;
      out.matches.push_back({p, *best_gt, best});
    } else {
      out.unmatched_pred.push_back(p);
    }
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (!taken[g]) out.unmatched_gt.push_back(g);
  }
  return out;
}

std::optional<MetricCurve> accumulate(std::span<const DetectionFrame> frames, int class_id,
                                      double threshold) {
  struct Scored {
    double score;
    std::size_t frame;
    std::size_t index;
    bool tp;
    std::array<double, 5> err;
  };
  std::vector<Scored> scored;
  std::size_t npos = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const DetectionFrame& fr = frames[f];
    BoxSet pred, gt;
    for (std::size_t i = 0; i < fr.pred.size(); ++i) {
      if (fr.pred.class_ids[i] == class_id) {
        pred.add(fr.pred.rows[i], class_id, fr.pred.scores[i]);
      }
    }
    for (std::size_t i = 0; i < fr.gt.size(); ++i) {
      if (fr.gt.class_ids[i] == class_id) gt.add(fr.gt.rows[i], class_id);
    }
    npos += gt.size();
    const MatchResult m = match_by_center_distance(pred, gt, threshold);
    for (const Match& mt : m.matches) {
      const BoxRow& p = pred.rows[mt.pred];
      const BoxRow& g = gt.rows[mt.gt];
      const double period = class_id == detection::kBarrier ? std::numbers::pi : 2 * std::numbers::pi;
      const double attr_err =
          g[kBoxAttr] < 0 ? std::numeric_limits<double>::quiet_NaN()
                          : (std::lround(p[kBoxAttr]) == std::lround(g[kBoxAttr]) ? 0.0 : 1.0);
      scored.push_back({pred.scores[mt.pred], f, mt.pred, true,
                        {center_distance(p, g), 1.0 - scale_iou(p, g),
                         angle_diff(box_yaw(g), box_yaw(p), period),
                         std::hypot(p[kBoxVx] - g[kBoxVx], p[kBoxVy] - g[kBoxVy]), attr_err}});
    }
    for (std::size_t i : m.unmatched_pred) {
      scored.push_back({pred.scores[i], f, i, false, {}});
    }
  }
  if (npos == 0) return std::nullopt;

  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    return std::tie(b.score, a.frame, a.index) < std::tie(a.score, b.frame, b.index);
  });

  MetricCurve curve;
  const bool any_tp = std::any_of(scored.begin(), scored.end(), [](const Scored& s) { return s.tp; });
  if (!any_tp) {
    // No true positive: zero precision and confidence, worst-case errors.
    for (auto* arr : {&curve.trans_err, &curve.scale_err, &curve.orient_err, &curve.vel_err,
                      &curve.attr_err}) {
      arr->fill(1.0);
    }
    return curve;
  }

  std::vector<double> rec, prec, conf;
  std::vector<double> tp_conf;
  std::array<std::vector<double>, 5> tp_err;
  double ctp = 0.0, cfp = 0.0;
  for (const Scored& s : scored) {
    (s.tp ? ctp : cfp) += 1.0;
    prec.push_back(ctp / (ctp + cfp));
    rec.push_back(ctp / static_cast<double>(npos));
    conf.push_back(s.score);
    if (s.tp) {
      tp_conf.push_back(s.score);
      for (std::size_t k = 0; k < 5; ++k) tp_err[k].push_back(s.err[k]);
    }
  }
  for (int i = 0; i < kCurvePoints; ++i) {
    const double r = static_cast<double>(i) / (kCurvePoints - 1);
    curve.precision[static_cast<std::size_t>(i)] = np_interp(r, rec, prec, prec.front(), 0.0);
    curve.confidence[static_cast<std::size_t>(i)] = np_interp(r, rec, conf, conf.front(), 0.0);
  }
  // Errors as a function of confidence: cumulative means over TPs looked up at
  // each recall sample's interpolated confidence.
  std::vector<double> conf_asc(tp_conf.rbegin(), tp_conf.rend());
  std::array<std::array<double, kCurvePoints>*, 5> dst = {
      &curve.trans_err, &curve.scale_err, &curve.orient_err, &curve.vel_err, &curve.attr_err};
  for (std::size_t k = 0; k < 5; ++k) {
    const std::vector<double> cm = cummean(tp_err[k]);
    const std::vector<double> cm_asc(cm.rbegin(), cm.rend());
    for (int i = 0; i < kCurvePoints; ++i) {
      (*dst[k])[static_cast<std::size_t>(i)] =
          np_interp(curve.confidence[static_cast<std::size_t>(i)], conf_asc, cm_asc,
                    cm_asc.front(), cm_asc.back());
    }
  }
  curve.max_recall_index = 0;
  for (int i = kCurvePoints - 1; i >= 0; --i) {
    if (curve.confidence[static_cast<std::size_t>(i)] != 0.0) {
      curve.max_recall_index = i;
      break;
    }
  }
  return curve;
}

double calc_ap(const MetricCurve& curve) {
  const int first = static_cast<int>(std::lround(100 * kMinRecall)) + 1;
  double sum = 0.0;
  for (int i = first; i < kCurvePoints; ++i) {
    const double p = curve.precision[static_cast<std::size_t>(i)];
    sum += std::max(0.0, (p - kMinPrecision) / (1.0 - kMinPrecision));
  }
  return sum / (kCurvePoints - first);
}

double calc_tp(const MetricCurve& curve, TpMetric metric) {
  const int first = static_cast<int>(std::lround(100 * kMinRecall)) + 1;
  const int last = curve.max_recall_index;
  if (last < first) return 1.0;
  const std::array<double, kCurvePoints>* arr = nullptr;
  switch (metric) {
    case TpMetric::kTranslation: arr = &curve.trans_err; break;
    case TpMetric::kScale: arr = &curve.scale_err; break;
    case TpMetric::kOrientation: arr = &curve.orient_err; break;
    case TpMetric::kVelocity: arr = &curve.vel_err; break;
    case TpMetric::kAttribute: arr = &curve.attr_err; break;
  }
  double sum = 0.0;
  for (int i = first; i <= last; ++i) sum += (*arr)[static_cast<std::size_t>(i)];
  return sum / (last - first + 1);
}

std::optional<double> average_precision(std::span<const DetectionFrame> frames, int class_id,
                                        double threshold) {
  const auto curve = accumulate(frames, class_id, threshold);
  if (!curve) return std::nullopt;
  return calc_ap(*curve);
}

double nds(double map, const TpErrors& tp) {
  double score = 5.0 * map;
  for (double e : {tp.ate, tp.ase, tp.aoe, tp.ave, tp.aae}) score += 1.0 - std::min(1.0, e);
  return score / 10.0;
}

EvalSummary evaluate_detection(std::span<const DetectionFrame> frames) {
  for (const DetectionFrame& f : frames) {
    f.pred.validate();
    f.gt.validate();
  }
  EvalSummary out;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  double ap_sum = 0.0;
  for (int c = 0; c < kNumDetectionClasses; ++c) {
    ClassEval ce;
    ce.class_id = c;
    bool has_gt = false;
    for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) {
      const auto curve = accumulate(frames, c, kDistanceThresholds[t]);
      if (!curve) break;
      has_gt = true;
      ce.ap[t] = calc_ap(*curve);
      if (kDistanceThresholds[t] == kTpThreshold) {
        auto tp = [&](TpMetric m) { return metric_applies(c, m) ? calc_tp(*curve, m) : nan; };
        ce.tp = {tp(TpMetric::kTranslation), tp(TpMetric::kScale), tp(TpMetric::kOrientation),
                 tp(TpMetric::kVelocity), tp(TpMetric::kAttribute)};
      }
    }
    if (!has_gt) continue;
    for (double ap : ce.ap) ap_sum += ap;
    out.classes.push_back(ce);
  }
  if (out.classes.empty()) {
    out.nds = nds(0.0, out.tp);
    return out;
  }
  out.map = ap_sum / static_cast<double>(out.classes.size() * kDistanceThresholds.size());
  auto mean_of = [&](double TpErrors::*field) {
    double s = 0.0;
    int n = 0;
    for (const ClassEval& ce : out.classes) {
      const double v = ce.tp.*field;
      if (std::isnan(v)) continue;
      s += v;
      ++n;
    }
    return n ? s / n : 1.0;
  };
  out.tp = {mean_of(&TpErrors::ate), mean_of(&TpErrors::ase), mean_of(&TpErrors::aoe),
            mean_of(&TpErrors::ave), mean_of(&TpErrors::aae)};
  out.nds = nds(out.map, out.tp);
  return out;
}

}  // namespace bevgrid
