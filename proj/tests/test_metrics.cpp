#include <cmath>

#include "doctest.h"
#include "trb/metrics.hpp"
#include "trb/rng.hpp"

using namespace trb;

namespace {

PersonAnnotation person_at(const KeypointSchema& s, Rng& rng, double span = 200.0) {
  PersonAnnotation a;
  for (int k = 0; k < s.n_keypoints(); ++k)
    a.keypoints.push_back({static_cast<float>(rng.uniform(0.0, span)),
                           static_cast<float>(rng.uniform(0.0, span)), Visibility::Visible});
  return a;
}

// independent hit recount used as the oracle
double recount_mean(const std::vector<PersonAnnotation>& preds,
                    const std::vector<PersonAnnotation>& gts, const KeypointSchema& s,
                    std::pair<int, int> ref, double alpha) {
  long n = 0, hit = 0;
  for (std::size_t p = 0; p < gts.size(); ++p) {
    const auto& ra = gts[p].keypoints[ref.first];
    const auto& rb = gts[p].keypoints[ref.second];
    if (!ra.labeled() || !rb.labeled()) continue;
    double t = alpha * std::hypot(double(ra.x) - rb.x, double(ra.y) - rb.y);
    for (int k = 0; k < s.n_keypoints(); ++k) {
      if (!gts[p].keypoints[k].labeled()) continue;
      ++n;
      double d = std::hypot(double(preds[p].keypoints[k].x) - gts[p].keypoints[k].x,
                            double(preds[p].keypoints[k].y) - gts[p].keypoints[k].y);
      if (d <= t) ++hit;
    }
  }
  return n ? 100.0 * hit / n : 0.0;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("perfect predictions score 100 everywhere") {
  KeypointSchema s = default_schema();
  Rng rng(31);
  std::vector<PersonAnnotation> gts;
  for (int i = 0; i < 5; ++i) gts.push_back(person_at(s, rng));
  EvalReport r = pck(gts, gts, s);
  CHECK(r.mean == 100.0);
  CHECK(r.ske == 100.0);
  CHECK(r.con == 100.0);
  for (int k = 0; k < s.n_keypoints(); ++k) CHECK(r.per_keypoint[k] == 100.0);
  CHECK(pckh(gts, gts, s).mean == 100.0);
  CHECK(auc(gts, gts, s, RefMetric::Pckh) == 100.0);
}

TEST_CASE("pck threshold arithmetic on a 100px torso") {
  KeypointSchema s = default_schema();
  PersonAnnotation gt;
  for (int k = 0; k < s.n_keypoints(); ++k)
    gt.keypoints.push_back({50.0f + 3.0f * k, 40.0f, Visibility::Visible});
  gt.keypoints[s.torso_pair.first] = {0.0f, 0.0f, Visibility::Visible};
  gt.keypoints[s.torso_pair.second] = {100.0f, 0.0f, Visibility::Visible};  // torso = 100
  PersonAnnotation pred = gt;
  pred.keypoints[6].x += 25.0f;  // 25 > 0.2 * 100
  EvalReport r = pck({pred}, {gt}, s, 0.2);
  CHECK(r.per_keypoint[6] == 0.0);
  for (int k = 0; k < s.n_keypoints(); ++k)
    if (k != 6) CHECK(r.per_keypoint[k] == 100.0);
  // 37 of 38 correct
  CHECK(std::abs(r.mean - 100.0 * 37 / 38) < 1e-9);
}

TEST_CASE("error exactly at the threshold counts correct") {
  KeypointSchema s = default_schema();
  PersonAnnotation gt;
  for (int k = 0; k < s.n_keypoints(); ++k) gt.keypoints.push_back({50, 50, Visibility::Visible});
  gt.keypoints[s.head_pair.first] = {100, 100, Visibility::Visible};
  gt.keypoints[s.head_pair.second] = {100, 164, Visibility::Visible};  // head = 64
  PersonAnnotation pred = gt;
  pred.keypoints[8].x += 32.0f;  // exactly 0.5 * 64
  EvalReport r = pckh({pred}, {gt}, s, 0.5);
  CHECK(r.per_keypoint[8] == 100.0);
}

TEST_CASE("persons without reference keypoints are skipped") {
  KeypointSchema s = default_schema();
  Rng rng(32);
  std::vector<PersonAnnotation> gts = {person_at(s, rng), person_at(s, rng)};
  gts[1].keypoints[s.torso_pair.first].v = Visibility::NotLabeled;
  EvalReport r = pck(gts, gts, s);
  CHECK(r.skipped_persons == 1);
  for (int k = 0; k < s.n_keypoints(); ++k) CHECK(r.counts[k] == 1);
}

TEST_CASE("auc trivial bounds") {
  KeypointSchema s = default_schema();
  Rng rng(33);
  std::vector<PersonAnnotation> gts = {person_at(s, rng)};
  std::vector<PersonAnnotation> far = gts;
  for (auto& k : far[0].keypoints) k.x += 5000.0f;  // farther than 0.5 * any reference
  CHECK(auc(far, gts, s, RefMetric::Pck) == 0.0);
  CHECK(auc(gts, gts, s, RefMetric::Pck) == 100.0);
}

TEST_CASE("auc matches a hand-integrated piecewise case") {
  KeypointSchema s = default_schema();
  PersonAnnotation gt;
  for (int k = 0; k < s.n_keypoints(); ++k)
    gt.keypoints.push_back({0, 0, Visibility::NotLabeled});
  gt.keypoints[s.head_pair.first] = {100, 100, Visibility::Visible};
  gt.keypoints[s.head_pair.second] = {100, 160, Visibility::Visible};  // head = 60
  gt.keypoints[5] = {30, 30, Visibility::Visible};
  PersonAnnotation pred = gt;
  pred.keypoints[5].y += 15.0f;  // correct from alpha = 0.25 up
  double got = auc({pred}, {gt}, s, RefMetric::Pckh);
  // 51 grid points; 25 of them score 2/3, the rest 3/3
  double want = 100.0 * (25.0 * (2.0 / 3.0) + 26.0) / 51.0;
  CHECK(std::abs(got - want) < 1e-6);
}

TEST_CASE("report equals brute-force recount on 1000 random instances") {
  KeypointSchema s = default_schema();
  Rng rng(34);
  std::vector<PersonAnnotation> gts, preds;
  for (int i = 0; i < 1000; ++i) {
    PersonAnnotation g = person_at(s, rng);
    for (auto& k : g.keypoints)
      if (rng.bernoulli(0.15)) k.v = Visibility::NotLabeled;
    PersonAnnotation p = g;
    for (auto& k : p.keypoints) {
      k.x += static_cast<float>(rng.normal() * 12.0);
      k.y += static_cast<float>(rng.normal() * 12.0);
    }
    gts.push_back(g);
    preds.push_back(p);
  }
  for (double alpha : {0.1, 0.2, 0.5}) {
    CHECK(std::abs(pck(preds, gts, s, alpha).mean -
                   recount_mean(preds, gts, s, s.torso_pair, alpha)) < 1e-9);
    CHECK(std::abs(pckh(preds, gts, s, alpha).mean -
                   recount_mean(preds, gts, s, s.head_pair, alpha)) < 1e-9);
  }

  // scale invariance: thresholds are relative
  std::vector<PersonAnnotation> gts2 = gts, preds2 = preds;
  for (auto* set : {&gts2, &preds2})
    for (auto& a : *set)
      for (auto& k : a.keypoints) {
        k.x *= 3.5f;
        k.y *= 3.5f;
      }
  EvalReport base = pckh(preds, gts, s), scaled = pckh(preds2, gts2, s);
  CHECK(std::abs(base.mean - scaled.mean) < 1e-9);
  CHECK(std::abs(base.ske - scaled.ske) < 1e-9);
  CHECK(std::abs(base.con - scaled.con) < 1e-9);

  // monotone in alpha
  double prev = -1.0;
  for (int i = 0; i <= 25; ++i) {
    double m = pck(preds, gts, s, i * 0.02).mean;
    CHECK(m >= prev);
    prev = m;
  }

  // group consistency: pooled mean equals the count-weighted keypoint mean
  double wsum = 0.0;
  long total = 0;
  for (int k = 0; k < s.n_keypoints(); ++k) {
    wsum += base.per_keypoint[k] * base.counts[k];
    total += base.counts[k];
  }
  CHECK(std::abs(base.mean - wsum / total) < 1e-9);
}

TEST_CASE("csv and table list the three group columns") {
  KeypointSchema s = default_schema();
  Rng rng(35);
  std::vector<PersonAnnotation> gts = {person_at(s, rng)};
  EvalReport r = pck(gts, gts, s);
  std::string csv = report_csv(r, s);
  CHECK(csv.find("Ske.") != std::string::npos);
  CHECK(csv.find("Con.") != std::string::npos);
  CHECK(csv.find("Mean") != std::string::npos);
  CHECK(csv.find("head_top") != std::string::npos);
  std::string table = report_table(r, "val");
  CHECK(table.find("Mean 100.00") != std::string::npos);
}

TEST_SUITE_END();
