#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "tamperloc/metrics.hpp"

using namespace tamperloc;

namespace {

ArrayX random_mask(Index n, RngStream& rng, Scalar rate) {
  ArrayX m(n);
  for (Index i = 0; i < n; ++i) m[i] = rng.bernoulli(rate) ? 1.0 : 0.0;
  return m;
}

std::vector<char> to_vec(const ArrayX& a) {
  std::vector<char> v(static_cast<size_t>(a.size()));
  for (Index i = 0; i < a.size(); ++i) v[static_cast<size_t>(i)] = a[i] != 0;
  return v;
}

}  // namespace

TEST_CASE("confusion basics") {
  RngStream rng(301);
  ArrayX gt = random_mask(64, rng, 0.3);
  ConfusionCounts same = confusion(gt, gt);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  CHECK(same.tp + same.tn == 64);

  ArrayX inv = 1 - gt;
  ConfusionCounts opp = confusion(inv, gt);
  CHECK(opp.tp == 0);
  CHECK(opp.tn == 0);

  CHECK_THROWS_AS(confusion(gt, random_mask(32, rng, 0.3)), DimensionError);
}

TEST_CASE("confusion matches the naive loop oracle") {
  RngStream rng(303);
  for (int rep = 0; rep < 20; ++rep) {
    ArrayX pred = random_mask(32 * 32, rng, rng.uniform(0.1, 0.9));
    ArrayX gt = random_mask(32 * 32, rng, rng.uniform(0.1, 0.9));
    ConfusionCounts c = confusion(pred, gt);
    oracle::NaiveConfusion ref = oracle::naive_confusion(to_vec(pred), to_vec(gt));
    CHECK(c.tp == ref.tp);
    CHECK(c.fp == ref.fp);
    CHECK(c.fn == ref.fn);
    CHECK(c.tn == ref.tn);
    CHECK(c.tp + c.fp + c.fn + c.tn == 32 * 32);
  }
}

TEST_CASE("f1_iou hand values and conventions") {
  auto [f1, iou] = f1_iou({2, 1, 1, 10});
  CHECK(f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(iou == doctest::Approx(0.5).epsilon(1e-15));

  auto [pf, pi] = f1_iou({5, 0, 0, 3});
  CHECK(pf == 1.0);
  CHECK(pi == 1.0);

  auto [zf, zi] = f1_iou({0, 3, 2, 1});
  CHECK(zf == 0.0);
  CHECK(zi == 0.0);

  auto [ef, ei] = f1_iou({0, 0, 0, 9});
  CHECK(ef == 1.0);
  CHECK(ei == 1.0);
}

TEST_CASE("f1 = 2 iou / (1 + iou) on random counts") {
  RngStream rng(305);
  for (int rep = 0; rep < 100; ++rep) {
    ConfusionCounts c{rng.uniform_int(0, 50), rng.uniform_int(0, 50),
                      rng.uniform_int(0, 50), rng.uniform_int(0, 50)};
    auto [f1, iou] = f1_iou(c);
    CHECK(f1 == doctest::Approx(2 * iou / (1 + iou)).epsilon(1e-12));
    CHECK(f1 >= iou - 1e-15);
  }
}

TEST_CASE("pixel_auc pinned cases") {
  ArrayX probs(6), gt(6);
  probs << 0.9, 0.8, 0.7, 0.3, 0.2, 0.1;
  gt << 1, 1, 1, 0, 0, 0;
  auto a = pixel_auc(probs, gt);
  REQUIRE(a.has_value());
  CHECK(*a == 1.0);

  ArrayX flat = ArrayX::Constant(6, 0.4);
  auto b = pixel_auc(flat, gt);
  REQUIRE(b.has_value());
  CHECK(*b == 0.5);

  CHECK(!pixel_auc(probs, ArrayX::Zero(6)).has_value());
  CHECK(!pixel_auc(probs, ArrayX::Ones(6)).has_value());
}

TEST_CASE("pixel_auc equals the trapezoidal ROC oracle") {
  RngStream rng(307);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 16 * 16;
    ArrayX probs(n);
    for (Index i = 0; i < n; ++i) {
      // quantized probabilities so ties actually occur
      probs[i] = std::round(rng.uniform() * 20) / 20;
    }
    ArrayX gt = random_mask(n, rng, 0.3);
    if (gt.sum() == 0 || gt.sum() == n) continue;
    auto mine = pixel_auc(probs, gt);
    REQUIRE(mine.has_value());
    std::vector<Scalar> sc(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) sc[static_cast<size_t>(i)] = probs[i];
    const Scalar ref = oracle::trapezoid_auc(sc, to_vec(gt));
    CHECK(std::abs(*mine - ref) <= 1e-9);
  }
}

TEST_CASE("pixel_auc is invariant under strictly monotone transforms") {
  RngStream rng(309);
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 128;
    ArrayX probs(n);
    for (Index i = 0; i < n; ++i) probs[i] = rng.uniform();
    ArrayX gt = random_mask(n, rng, 0.4);
    if (gt.sum() == 0 || gt.sum() == n) continue;
    auto base = pixel_auc(probs, gt);
    ArrayX cubed = probs.cube();
    ArrayX logist = probs.unaryExpr([](Scalar v) { return 1 / (1 + std::exp(-7 * v)); });
    CHECK(*pixel_auc(cubed, gt) == doctest::Approx(*base).epsilon(1e-12));
    CHECK(*pixel_auc(logist, gt) == doctest::Approx(*base).epsilon(1e-12));
  }
}

TEST_CASE("score_image applies a strict threshold") {
  ArrayX probs(4), gt(4);
  probs << 0.0, 0.5, 0.6, 1.0;
  gt << 0, 0, 1, 1;
  ImageMetrics m = score_image("x", probs, gt, 0.5);
  CHECK(m.f1 == 1.0);  // 0.5 itself is not positive
  ImageMetrics z = score_image("x", probs, gt, 0.0);
  // 0.0 is not > 0.0, so exactly three positives
  ConfusionCounts c = confusion((probs > 0.0).cast<Scalar>(), gt);
  CHECK(c.tp + c.fp == 3);
  CHECK(z.f1 < 1.0);
}

TEST_CASE("report carries per-image rows, means, and exclusions") {
  MetricsReport r;
  r.threshold = 0.5;
  ImageMetrics a{"000001", Scalar(0.9), 0.8, 0.7};
  ImageMetrics b{"000002", std::nullopt, 1.0, 1.0};
  r.per_image = {a, b};
  r.finalize();
  CHECK(r.mean_f1 == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r.mean_iou == doctest::Approx(0.85).epsilon(1e-15));
  REQUIRE(r.mean_auc.has_value());
  CHECK(*r.mean_auc == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r.auc_excluded == 1);

  const std::string csv = report_csv(r);
  CHECK(csv.find("image,auc,f1,iou\n") == 0);
  CHECK(csv.find("000002,nan,1,1\n") != std::string::npos);
  size_t rows = std::count(csv.begin(), csv.end(), '\n');
  CHECK(rows == 3);  // header + 2 images

  const std::string table = report_table(r);
  CHECK(table.find("excluded from the AUC mean") != std::string::npos);
}

TEST_CASE("metrics are order-invariant across images") {
  RngStream rng(311);
  ArrayX p1(64), p2(64);
  for (Index i = 0; i < 64; ++i) {
    p1[i] = rng.uniform();
    p2[i] = rng.uniform();
  }
  ArrayX g1 = random_mask(64, rng, 0.3);
  ArrayX g2 = random_mask(64, rng, 0.3);
  g1[0] = 1;
  g2[0] = 1;
  MetricsReport fwd, rev;
  fwd.per_image = {score_image("a", p1, g1, 0.5), score_image("b", p2, g2, 0.5)};
  rev.per_image = {score_image("b", p2, g2, 0.5), score_image("a", p1, g1, 0.5)};
  fwd.finalize();
  rev.finalize();
  CHECK(fwd.mean_f1 == rev.mean_f1);
  CHECK(fwd.mean_iou == rev.mean_iou);
  CHECK(*fwd.mean_auc == *rev.mean_auc);
}
