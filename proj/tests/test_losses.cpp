#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bevgrid/losses.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bevgrid;

namespace {

BoxRow unit_box() { return {1, 2, 0.5, 4, 2, 1.5, 0, 1, 0, 0, -1}; }

HeatmapGrid grid16() { return {16, 16, -8.0, -8.0, 1.0, 1.0}; }

}  // namespace

TEST_CASE("loss config") {
  const LossConfig se = LossConfig::semantic(), bo = LossConfig::binary();
  CHECK(se.alpha == 2.0);
  CHECK(se.gamma == 4.0);
  CHECK(se.mu_od == 0.25);
  CHECK(se.mu_oc == 1.0);
  CHECK(bo.mu_oc == 6.0);
  CHECK(se.omega == 10.0);
  CHECK(se.class_weights == std::vector<double>(17, 1.0));
  CHECK(bo.class_weights == std::vector<double>{1.0, 2.0});
  LossConfig bad = se;
  bad.class_weights[3] = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("heatmap clamps at the type boundary") {
  Tensor t({1, 1, 2});
  t(0, 0, 0) = 0.0;
  t(0, 0, 1) = 1.0;
  const Heatmap h = Heatmap::from_probabilities(t);
  CHECK(h.values()(0, 0, 0) == kHeatmapClamp);
  CHECK(h.values()(0, 0, 1) == 1.0 - kHeatmapClamp);
}

TEST_CASE("gt_heatmap") {
  CHECK(gt_heatmap(BoxSet{}, grid16(), GtHeatmapMode::kGaussian).values == Tensor({10, 16, 16}));

  BoxSet one;
  one.add(unit_box(), 3);
  const GtHeatmap hot = gt_heatmap(one, grid16(), GtHeatmapMode::kOneHot);
  CHECK(hot.values.sum() == 1.0);
  CHECK(hot.values(3, 9, 10) == 1.0);

  const GtHeatmap g = gt_heatmap(one, grid16(), GtHeatmapMode::kGaussian);
  CHECK(g.values(3, 9, 10) == 1.0);
  // Non-increasing with distance from the centre cell.
  std::vector<std::pair<int, double>> by_r2;
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) by_r2.emplace_back((i - 9) * (i - 9) + (j - 10) * (j - 10), g.values(3, i, j));
  }
  std::sort(by_r2.begin(), by_r2.end());
  for (std::size_t k = 1; k < by_r2.size(); ++k) {
    CHECK(by_r2[k].second <= by_r2[k - 1].second);
    if (by_r2[k].first == by_r2[k - 1].first) CHECK(by_r2[k].second == by_r2[k - 1].second);
  }
  int centres = 0;
  for (double v : g.values.storage()) centres += v == 1.0;
  CHECK(centres == 1);

  BoxSet off;
  BoxRow r = unit_box();
  r[kBoxX] = 100;
  off.add(r, 0);
  CHECK(gt_heatmap(off, grid16(), GtHeatmapMode::kGaussian).values.sum() == 0.0);
}

TEST_CASE("gaussian focal loss") {
  const LossConfig cfg = LossConfig::semantic();
  const double eps = 0.01;
  const GtHeatmap zero{Tensor({10, 4, 4})};
  const double cells = 160;
  const LossValue v = gaussian_focal_loss(Heatmap::from_probabilities(Tensor({10, 4, 4}, eps)), zero, cfg);
  CHECK(v.value == doctest::Approx(-std::log(1 - eps) * eps * eps * cells).epsilon(1e-12));

  GtHeatmap centre{Tensor({10, 4, 4})};
  centre.values(2, 1, 1) = 1.0;
  double prev = INFINITY;
  for (double e : {1e-2, 1e-3, 1e-4}) {
    Tensor h({10, 4, 4}, e);
    h(2, 1, 1) = 1 - e;
    const double loss = gaussian_focal_loss(Heatmap::from_probabilities(h), centre, cfg).value;
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-6);

  fixture::Rng rng(6);
  const Tensor h = fixture::random_tensor(rng, {10, 4, 4}, 0.01, 0.99);
  GtHeatmap gt{fixture::random_tensor(rng, {10, 4, 4}, 0.0, 0.99)};
  gt.values(1, 2, 3) = 1.0;
  gt.values(7, 0, 0) = 1.0;
  const LossValue w = gaussian_focal_loss(Heatmap::from_probabilities(h), gt, cfg);
  CHECK(w.value == doctest::Approx(static_cast<double>(oracle::focal_loss(h, gt.values, 2, 4))).epsilon(1e-12));

  GtHeatmap bad{Tensor({10, 4, 4}, 1.5)};
  CHECK_THROWS_AS(gaussian_focal_loss(Heatmap::from_probabilities(h), bad, cfg), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_focal_loss(Heatmap::from_probabilities(Tensor({10, 4, 5}, 0.5)), gt, cfg),
                  std::invalid_argument);
}

TEST_CASE("l1 box loss") {
  BoxSet a, b;
  a.add(unit_box(), 0, 0.5);
  b.add(unit_box(), 0);
  CHECK(l1_box_loss(a, b).value == 0.0);
  a.rows[0][kBoxVx] += 1.0;
  const BoxLossValue v = l1_box_loss(a, b);
  CHECK(v.value == 1.0);
  CHECK(v.grad[0][kBoxVx] == 1.0);
  CHECK(v.grad[0][kBoxX] == 0.0);

  fixture::Rng rng(7);
  BoxSet p, g;
  for (int m = 0; m < 5; ++m) {
    BoxRow r = unit_box(), s = unit_box();
    for (std::size_t k = 0; k < kBoxDims; ++k) {
      r[k] += rng.uniform(-0.4, 0.4);
      s[k] += rng.uniform(-0.4, 0.4);
    }
    p.add(r, m, 0.3);
    g.add(s, m);
  }
  double sum = 0.0;
  for (std::size_t m = 0; m < 5; ++m) {
    for (std::size_t k = 0; k < kBoxDims; ++k) sum += std::abs(p.rows[m][k] - g.rows[m][k]);
  }
  CHECK(std::abs(l1_box_loss(p, g).value - sum / 5) <= 1e-12);

  BoxSet short_gt = g;
  short_gt.rows.pop_back();
  short_gt.class_ids.pop_back();
  short_gt.scores.pop_back();
  CHECK_THROWS_AS(l1_box_loss(p, short_gt), std::invalid_argument);
}

TEST_CASE("weighted cross-entropy") {
  for (int o : {2, 5, 17}) {
    const std::vector<std::int32_t> labels = {0, 1, 1, 0};
    const std::vector<std::uint8_t> mask(4, 1);
    const std::vector<double> w(static_cast<std::size_t>(o), 1.0);
    const double v = weighted_cross_entropy(Tensor({std::size_t(o), 4}, 0.3), labels, mask, w).value;
    CHECK(v == doctest::Approx(std::log(o)).epsilon(1e-14));
  }

  Tensor strong({3, 4}, -10.0);
  const std::vector<std::int32_t> labels = {2, 0, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) strong(static_cast<std::size_t>(labels[i]), i) = 10.0;
  const std::vector<std::uint8_t> all(4, 1);
  const std::vector<double> unit(3, 1.0);
  CHECK(weighted_cross_entropy(strong, labels, all, unit).value < 1e-3);

  fixture::Rng rng(8);
  const Tensor logits = fixture::random_tensor(rng, {3, 6}, -3, 3);
  const std::vector<std::int32_t> l6 = {0, 2, 1, 1, 0, 2};
  const std::vector<std::uint8_t> m6 = {1, 0, 1, 1, 0, 1};
  const std::vector<double> w = {0.5, 2.0, 1.25};
  CHECK(weighted_cross_entropy(logits, l6, m6, w).value ==
        doctest::Approx(oracle::cross_entropy(logits, l6, m6, w)).epsilon(1e-12));
  const std::vector<std::uint8_t> none(6, 0);
  CHECK_THROWS_AS(weighted_cross_entropy(logits, l6, none, w), std::invalid_argument);
  const std::vector<std::int32_t> bad = {3, 2, 1, 1, 0, 2};
  CHECK_THROWS_AS(weighted_cross_entropy(logits, bad, m6, w), std::invalid_argument);

  BinaryVoxelGrid occ({1, 2, 3});
  occ.values = {0, 1, 1, 0, 0, 1};
  const LossConfig bo = LossConfig::binary();
  const Tensor two({2, 1, 2, 3}, 0.0);
  // Every voxel contributes: mean of w_y * ln 2.
  CHECK(weighted_cross_entropy(two, occ, bo).value == doctest::Approx((3 * 1.0 + 3 * 2.0) / 6 * std::log(2.0)));
}

TEST_CASE("lovasz softmax") {
  Tensor perfect({3, 4});
  const std::vector<std::int32_t> labels = {2, 0, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) perfect(static_cast<std::size_t>(labels[i]), i) = 1.0;
  const std::vector<std::uint8_t> all(4, 1);
  CHECK(lovasz_softmax(perfect, labels, all).value == 0.0);

  // Class 0: errors (0.7, 0.6) give 0.7; class 1: errors (0.7 on a false
  // positive, 0.6 on its own voxel) give 0.7 * 1/2 + 0.6 * 1/2.
  Tensor p({2, 2});
  p(0, 0) = 0.3;
  p(1, 0) = 0.7;
  p(0, 1) = 0.6;
  p(1, 1) = 0.4;
  const std::vector<std::int32_t> two = {0, 1};
  const std::vector<std::uint8_t> both(2, 1);
  CHECK(lovasz_softmax(p, two, both).value == doctest::Approx((0.7 + 0.65) / 2).epsilon(1e-15));

  fixture::Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor probs = softmax_classes(fixture::random_tensor(rng, {4, 7}, -2, 2));
    std::vector<std::int32_t> l(7);
    std::vector<std::uint8_t> m(7);
    for (std::size_t i = 0; i < 7; ++i) {
      l[i] = rng.integer(0, 3);
      m[i] = rng.chance(0.8);
    }
    m[3] = 1;
    const double v = lovasz_softmax(probs, l, m).value;
    CHECK(std::abs(v - oracle::lovasz_softmax(probs, l, m, false)) <= 1e-12);
  }

  Tensor off({2, 2}, 0.7);
  CHECK_THROWS_AS(lovasz_softmax(off, two, both), std::invalid_argument);
  CHECK_NOTHROW(lovasz_softmax(off, two, both, false));
}

TEST_CASE("softmax helpers") {
  fixture::Rng rng(10);
  const Tensor z = fixture::random_tensor(rng, {5, 3}, -40, 40);
  const Tensor s = softmax_classes(z);
  for (std::size_t v = 0; v < 3; ++v) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) sum += s(c, v);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  }
  // Vector-Jacobian product against central differences.
  const Tensor g = fixture::random_tensor(rng, {5, 3});
  const Tensor back = softmax_classes_backward(s, g);
  const Tensor zs = fixture::random_tensor(rng, {5, 3}, -2, 2);
  const Tensor ss = softmax_classes(zs);
  const Tensor bs = softmax_classes_backward(ss, g);
  auto dot = [&](const Tensor& zz) {
    const Tensor q = softmax_classes(zz);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += q.storage()[i] * g.storage()[i];
    return acc;
  };
  for (std::size_t i = 0; i < zs.size(); ++i) {
    Tensor up = zs, down = zs;
    up.storage()[i] += 1e-6;
    down.storage()[i] -= 1e-6;
    CHECK(bs.storage()[i] == doctest::Approx((dot(up) - dot(down)) / 2e-6).epsilon(1e-6));
  }
  CHECK(back.shape() == z.shape());
}

TEST_CASE("loss compositions") {
  const LossConfig cfg = LossConfig::semantic();
  CHECK(od_loss(0.0, 0.0, cfg) == 0.0);
  CHECK(od_loss(1.0, 4.0, cfg) == 2.0);
  CHECK(total_loss(1.0, 0.5, cfg) == 6.0);
  CHECK(oc_loss(0.5, 0.25, LossConfig::binary()) == 2.0);
  CHECK(total_loss(0.0, 0.0, cfg) == 0.0);
}
