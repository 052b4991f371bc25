#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bevgrid/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bevgrid;

namespace {

BoxRow at(double x, double y) { return {x, y, 0.8, 4.0, 1.8, 1.5, 0.0, 1.0, 0.0, 0.0, -1.0}; }

}  // namespace

TEST_CASE("voxel mIoU") {
  fixture::Rng rng(1);
  SemanticVoxelGrid gt({3, 3, 3}, 17), pred({3, 3, 3}, 17);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt.class_ids[i] = rng.integer(0, 4);
    gt.labeled_mask[i] = gt.class_ids[i] != 0 || rng.chance(0.5);
    pred.class_ids[i] = rng.integer(0, 4);
    pred.labeled_mask[i] = 1;
  }
  const MiouResult r = voxel_miou(pred, gt);
  const auto want = oracle::voxel_iou(pred.class_ids, gt.class_ids, gt.labeled_mask, 17);
  REQUIRE(r.per_class.size() == 17);
  double sum = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < 17; ++c) {
    CHECK(r.per_class[c].has_value() == want[c].has_value());
    if (want[c]) {
      CHECK(*r.per_class[c] == *want[c]);
      sum += *want[c];
      ++n;
    }
  }
  CHECK(*r.miou == doctest::Approx(sum / n).epsilon(1e-15));

  const MiouResult self = voxel_miou(gt, gt);
  for (const auto& v : self.per_class) {
    if (v) CHECK(*v == 1.0);
  }
  CHECK(*self.miou == 1.0);

  // Relabelling both grids with one permutation (empty stays 0) permutes the
  // per-class IoUs.
  std::vector<int> perm(17);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin() + 1, perm.end(), rng.engine());
  SemanticVoxelGrid pg = pred, gg = gt;
  for (auto& c : pg.class_ids) c = perm[static_cast<std::size_t>(c)];
  for (auto& c : gg.class_ids) c = perm[static_cast<std::size_t>(c)];
  const MiouResult q = voxel_miou(pg, gg);
  for (std::size_t c = 0; c < 17; ++c) CHECK(q.per_class[static_cast<std::size_t>(perm[c])] == r.per_class[c]);
  CHECK(*q.miou == doctest::Approx(*r.miou).epsilon(1e-15));

  CHECK_THROWS_AS(voxel_miou(SemanticVoxelGrid({2, 2, 2}, 17), gt), std::invalid_argument);
}

TEST_CASE("center distance matching") {
  BoxSet none, gt;
  gt.add(at(0, 0), 0);
  CHECK(match_by_center_distance(none, gt, 2.0).matches.empty());

  BoxSet exact;
  exact.add(at(0, 0), 0, 0.5);
  const MatchResult one = match_by_center_distance(exact, gt, 0.5);
  REQUIRE(one.matches.size() == 1);
  CHECK(one.matches[0].distance == 0.0);

  // p1 (best score) takes g0; p2 has nothing within 2 m; p0 gets what is
  // left.
  BoxSet g2, p3;
  g2.add(at(0, 0), 0);
  g2.add(at(1.5, 0), 0);
  p3.add(at(0.9, 0), 0, 0.5);
  p3.add(at(0.2, 0), 0, 0.9);
  p3.add(at(5, 5), 0, 0.7);
  const MatchResult m = match_by_center_distance(p3, g2, 2.0);
  REQUIRE(m.matches.size() == 2);
  CHECK(m.matches[0].pred == 1);
  CHECK(m.matches[0].gt == 0);
  CHECK(m.matches[0].distance == doctest::Approx(0.2));
  CHECK(m.matches[1].pred == 0);
  CHECK(m.matches[1].gt == 1);
  CHECK(m.unmatched_pred == std::vector<std::size_t>{2});
  CHECK(m.unmatched_gt.empty());

  // Class ids must agree; the threshold is strict.
  BoxSet other;
  other.add(at(0, 0), 1, 0.9);
  CHECK(match_by_center_distance(other, gt, 2.0).matches.empty());
  BoxSet edge;
  edge.add(at(2.0, 0), 0, 0.9);
  CHECK(match_by_center_distance(edge, gt, 2.0).matches.empty());

  // Against every assignment order: greedy by score equals the hand result.
  fixture::Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    BoxSet p, g;
    for (int k = 0; k < 4; ++k) p.add(at(rng.uniform(-3, 3), rng.uniform(-3, 3)), 0, rng.uniform(0, 1));
    for (int k = 0; k < 3; ++k) g.add(at(rng.uniform(-3, 3), rng.uniform(-3, 3)), 0);
    const MatchResult r = match_by_center_distance(p, g, 1.5);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p.scores[a] > p.scores[b]; });
    std::vector<bool> taken(g.size(), false);
    std::size_t k = 0;
    for (std::size_t i : order) {
      std::ptrdiff_t best = -1;
      double bd = 1.5;
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double d = std::hypot(p.rows[i][0] - g.rows[j][0], p.rows[i][1] - g.rows[j][1]);
        if (!taken[j] && d < bd) {
          bd = d;
          best = static_cast<std::ptrdiff_t>(j);
        }
      }
      if (best < 0) continue;
      taken[static_cast<std::size_t>(best)] = true;
      REQUIRE(k < r.matches.size());
      CHECK(r.matches[k].pred == i);
      CHECK(r.matches[k].gt == static_cast<std::size_t>(best));
      ++k;
    }
    CHECK(k == r.matches.size());
  }
}

TEST_CASE("average precision") {
  std::vector<DetectionFrame> frames(1);
  frames[0].gt.add(at(0, 0), 0);
  frames[0].gt.add(at(10, 0), 0);
  frames[0].gt.add(at(20, 0), 0);
  frames[0].pred.add(at(0, 0), 0, 0.9);
  frames[0].pred.add(at(30, 0), 0, 0.8);
  frames[0].pred.add(at(10, 0), 0, 0.7);
  // Recall 1/3, 1/3, 2/3 at precision 1, 1/2, 2/3: interpolating from the
  // second point, zero past the last recall.
  double sum = 0.0;
  for (int i = 11; i <= 100; ++i) {
    const double r = i / 100.0;
    double p = 0.0;
    if (r < 1.0 / 3.0) {
      p = 1.0;
    } else if (r <= 2.0 / 3.0) {
      p = 0.5 + (r - 1.0 / 3.0) / (1.0 / 3.0) * (2.0 / 3.0 - 0.5);
    }
    sum += std::max(0.0, (p - 0.1) / 0.9);
  }
  CHECK(*average_precision(frames, 0, 2.0) == doctest::Approx(sum / 90).epsilon(1e-12));
  CHECK_FALSE(average_precision(frames, 3, 2.0).has_value());

  // Scores enter only through their order.
  std::vector<DetectionFrame> squashed = frames;
  for (double& s : squashed[0].pred.scores) s = s * s * 0.5;
  for (double t : kDistanceThresholds) CHECK(average_precision(squashed, 0, t) == average_precision(frames, 0, t));

  std::vector<DetectionFrame> perfect(1);
  perfect[0].gt = frames[0].gt;
  perfect[0].pred = frames[0].gt;
  CHECK(*average_precision(perfect, 0, 0.5) == 1.0);
  std::vector<DetectionFrame> miss(1);
  miss[0].gt = frames[0].gt;
  miss[0].pred.add(at(50, 50), 0, 1.0);
  CHECK(*average_precision(miss, 0, 4.0) == 0.0);
  std::vector<DetectionFrame> empty(1);
  empty[0].gt = frames[0].gt;
  CHECK(*average_precision(empty, 0, 4.0) == 0.0);
}

TEST_CASE("true-positive errors") {
  std::vector<DetectionFrame> frames(1);
  BoxRow g = at(0, 0), p = at(0.3, 0.4);
  g[kBoxVx] = 1.0;
  frames[0].gt.add(g, detection::kCar);
  frames[0].pred.add(p, detection::kCar, 0.9);
  const EvalSummary s = evaluate_detection(frames);
  REQUIRE(s.classes.size() == 1);
  CHECK(s.classes[0].tp.ate == doctest::Approx(0.5));
  CHECK(s.classes[0].tp.ase == doctest::Approx(0.0).scale(1.0));
  CHECK(s.classes[0].tp.aoe == doctest::Approx(0.0).scale(1.0));
  CHECK(s.classes[0].tp.ave == doctest::Approx(1.0));
    // No attribute on any TP: the error defaults to 1.
  CHECK(s.classes[0].tp.aae == 1.0);
  CHECK(s.tp.ate == doctest::Approx(0.5));
  CHECK(s.nds == doctest::Approx(nds(s.map, s.tp)));
}

TEST_CASE("nds") {
  CHECK(nds(1.0, {0, 0, 0, 0, 0}) == 1.0);
  CHECK(nds(0.0, {1, 1, 1, 1, 1}) == 0.0);
  CHECK(nds(0.0, {5, 5, 5, 5, 5}) == 0.0);
  CHECK(nds(0.474, {0.471, 0.246, 0.389, 0.330, 0.128}) == doctest::Approx(0.5806).epsilon(1e-12));
  CHECK(std::abs(nds(0.456, {0.506, 0.253, 0.414, 0.366, 0.131}) - 0.561) < 5e-4);

  fixture::Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double map = rng.uniform(0, 1);
    TpErrors tp{rng.uniform(0, 1.5), rng.uniform(0, 1.5), rng.uniform(0, 1.5), rng.uniform(0, 1.5),
                rng.uniform(0, 1.5)};
    const double base = nds(map, tp);
    CHECK(nds(std::min(1.0, map + 0.05), tp) >= base);
    TpErrors worse = tp;
    worse.ave += 0.1;
    CHECK(nds(map, worse) <= base);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
  }
}
