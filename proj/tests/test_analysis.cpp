#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "roirel/analysis.hpp"
#include "roirel/errors.hpp"

using namespace roirel;

namespace {

ScoredBox square(double x, double y, double side, int label, double score = 1.0) {
  return {OrientedBox(x, y, side, side, 0.0), label, score};
}

SceneDetections with_detections(std::vector<ScoredBox> dets) {
  SceneDetections s;
  s.detections = std::move(dets);
  return s;
}

// Mean of squared nearest-neighbour distances, both ways, halved.
double chamfer_oracle(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  double ab = 0, ba = 0;
  for (const auto& p : a) {
    double m = INFINITY;
    for (const auto& q : b) m = std::min(m, std::pow(p.x - q.x, 2) + std::pow(p.y - q.y, 2));
    ab += m;
  }
  for (const auto& q : b) {
    double m = INFINITY;
    for (const auto& p : a) m = std::min(m, std::pow(p.x - q.x, 2) + std::pow(p.y - q.y, 2));
    ba += m;
  }
  return (ab / a.size() + ba / b.size()) / 2;
}

std::vector<SceneDetections> generated(int n, double ambiguity = 0.3) {
  SceneConfig c;
  c.ambiguity_rate = ambiguity;
  const PrototypeBank bank(c.feature_dim, 0);
  std::vector<SceneDetections> out;
  for (int s = 0; s < n; ++s) out.push_back(ground_truth_as_detections(make_scene(c, bank, static_cast<std::uint64_t>(s))));
  return out;
}

}  // namespace

TEST(ScaleOutliers, EqualSizesHaveNone) {
  std::vector<ScoredBox> d;
  for (int i = 0; i < 20; ++i) d.push_back(square(i, 0, 3, kShip, 0.95));
  const auto scenes = std::vector{with_detections(d)};
  const OutlierReport r = scale_outliers(scenes);
  EXPECT_EQ(r.total_outliers(), 0u);
  EXPECT_EQ(r.classes[kShip].total, 20u);
  EXPECT_NEAR(r.classes[kShip].mean_scale, 3.0, 1e-12);
  EXPECT_NEAR(*r.classes[kShip].std_scale, 0.0, 1e-12);
}

TEST(ScaleOutliers, SingleGiantIsCounted) {
  std::vector<ScoredBox> d;
  for (int i = 0; i < 100; ++i) d.push_back(square(i, 0, 10, kPlane, 0.99));
  d.push_back(square(0, 50, 1000, kPlane, 0.99));
  const auto scenes = std::vector{with_detections(d)};
  const OutlierReport r = scale_outliers(scenes);
  const double mu = (100 * 10.0 + 1000.0) / 101;
  const double var = (100 * std::pow(10 - mu, 2) + std::pow(1000 - mu, 2)) / 101;
  EXPECT_NEAR(r.classes[kPlane].mean_scale, mu, 1e-9);
  EXPECT_NEAR(*r.classes[kPlane].std_scale, std::sqrt(var), 1e-9);
  EXPECT_EQ(r.classes[kPlane].outliers, 1u);
  EXPECT_GT(1000 - mu, 3 * std::sqrt(var));
  EXPECT_LT(mu - 10, 3 * std::sqrt(var));
}

TEST(ScaleOutliers, ConfidenceFilterAndFlags) {
  const auto scenes = std::vector{with_detections({square(0, 0, 2, kShip, 0.5), square(0, 0, 2, kShip, 0.9),
                                                   square(0, 0, 2, kShip, 0.95), square(0, 0, 2, kHarbor, 0.99),
                                                   square(0, 0, 2, kNumClasses, 0.99)})};
  const OutlierReport r = scale_outliers(scenes, 0.9);
  EXPECT_EQ(r.classes[kShip].total, 1u);
  EXPECT_TRUE(r.classes[kShip].flagged());
  EXPECT_EQ(r.classes[kShip].outliers, 0u);
  EXPECT_TRUE(r.classes[kHarbor].flagged());
  EXPECT_EQ(r.classes.size(), static_cast<std::size_t>(kNumClasses));
  EXPECT_EQ(scale_outliers(scenes, 0.4).classes[kShip].total, 3u);
}

TEST(ScaleOutliers, MatchesNaiveRecomputation) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SceneDetections> scenes(3);
    for (auto& s : scenes) {
      const int n = static_cast<int>(rng.uniform_int(0, 40));
      for (int i = 0; i < n; ++i) {
        const double side = rng.bernoulli(0.05) ? rng.uniform(10, 40) : std::exp(rng.normal(0.5, 0.2));
        s.detections.push_back({OrientedBox(0, 0, side, side * rng.uniform(0.5, 1.5), 0),
                                static_cast<int>(rng.uniform_int(0, kNumClasses)), rng.uniform()});
      }
    }
    const OutlierReport r = scale_outliers(scenes, 0.6);
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<double> v;
      for (const auto& s : scenes)
        for (const auto& d : s.detections)
          if (d.label == c && d.score > 0.6) v.push_back(std::sqrt(d.box.area()));
      const auto& row = r.classes[static_cast<std::size_t>(c)];
      ASSERT_EQ(row.total, v.size());
      ASSERT_LE(row.outliers, row.total);
      if (v.size() < 2) {
        EXPECT_TRUE(row.flagged());
        EXPECT_EQ(row.outliers, 0u);
        continue;
      }
      double mu = 0;
      for (double x : v) mu += x;
      mu /= v.size();
      double var = 0;
      for (double x : v) var += (x - mu) * (x - mu);
      const double sd = std::sqrt(var / v.size());
      std::size_t count = 0;
      for (double x : v) count += std::abs(x - mu) > 3 * sd;
      EXPECT_NEAR(row.mean_scale, mu, 1e-9);
      EXPECT_GE(*row.std_scale, 0.0);
      EXPECT_NEAR(*row.std_scale, sd, 1e-9);
      EXPECT_EQ(row.outliers, count);
    }
  }
}

TEST(ScaleOutliers, ReportsRender) {
  const auto scenes = std::vector{with_detections({square(0, 0, 2, kShip), square(0, 0, 4, kShip)})};
  const OutlierReport r = scale_outliers(scenes);
  EXPECT_EQ(r.to_json()["classes"][kShip]["mean_scale"], 3.0);
  EXPECT_TRUE(r.to_json()["classes"][kPlane]["std_scale"].is_null());
  EXPECT_NE(r.to_table().find("ship"), std::string::npos);
  EXPECT_NE(r.to_csv().find("ship,2,3.000000,1.000000,0"), std::string::npos);
}

TEST(CategoryChamfer, IdenticalCentersGiveZero) {
  const auto scenes = std::vector{
      with_detections({square(1, 1, 1, kShip), square(4, 2, 1, kShip), square(1, 1, 2, kHarbor), square(4, 2, 3, kHarbor)})};
  const ChamferReport r = category_chamfer(scenes, kShip, kHarbor);
  ASSERT_TRUE(r.mean);
  EXPECT_EQ(*r.mean, 0.0);
}

TEST(CategoryChamfer, SingletonsGiveSquaredDistance) {
  const auto scenes = std::vector{with_detections({square(0, 0, 1, kShip), square(3, 4, 1, kHarbor)})};
  EXPECT_NEAR(*category_chamfer(scenes, kShip, kHarbor).mean, 25.0, 1e-12);
}

TEST(CategoryChamfer, ThreeVersusTwoMatchesOracle) {
  const std::vector<Point2> a = {{0, 0}, {2, 1}, {5, 5}}, b = {{1, 0}, {4, 6}};
  std::vector<ScoredBox> d;
  for (const auto& p : a) d.push_back(square(p.x, p.y, 1, kShip));
  for (const auto& p : b) d.push_back(square(p.x, p.y, 1, kSmallVehicle));
  const auto scenes = std::vector{with_detections(d)};
  // Hand: a->b mins 1, 2, 2; b->a mins 1, 2.
  EXPECT_NEAR(chamfer_oracle(a, b), 0.5 * (5.0 / 3 + 3.0 / 2), 1e-12);
  EXPECT_NEAR(*category_chamfer(scenes, kShip, kSmallVehicle).mean, chamfer_oracle(a, b), 1e-12);
}

TEST(CategoryChamfer, SkipsScenesAndAverages) {
  const auto scenes = std::vector{with_detections({square(0, 0, 1, kShip), square(3, 4, 1, kHarbor)}),
                                  with_detections({square(0, 0, 1, kShip)}),
                                  with_detections({square(0, 0, 1, kShip), square(1, 0, 1, kHarbor)}),
                                  with_detections({square(0, 0, 1, kShip), square(9, 0, 1, kHarbor, 0.2)})};
  const ChamferReport r = category_chamfer(scenes, kShip, kHarbor, 0.5);
  EXPECT_EQ(r.qualifying, 2u);
  EXPECT_EQ(r.skipped, 2u);
  EXPECT_FALSE(r.per_scene[1]);
  EXPECT_FALSE(r.per_scene[3]);
  EXPECT_NEAR(*r.mean, 13.0, 1e-12);
  EXPECT_FALSE(category_chamfer(std::vector{scenes[1]}, kShip, kHarbor).mean);
}

TEST(CategoryChamfer, SymmetricAndOracleOnRandomScenes) {
  Rng rng(2);
  std::vector<SceneDetections> scenes(20);
  for (auto& s : scenes) {
    for (int i = 0; i < 8; ++i)
      s.detections.push_back(square(rng.uniform(0, 30), rng.uniform(0, 30), 1,
                                    rng.bernoulli(0.5) ? kShip : kHarbor, rng.uniform()));
  }
  const ChamferReport ab = category_chamfer(scenes, kShip, kHarbor, 0.3);
  const ChamferReport ba = category_chamfer(scenes, kHarbor, kShip, 0.3);
  ASSERT_EQ(ab.per_scene.size(), 20u);
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    std::vector<Point2> a, b;
    for (const auto& d : scenes[k].detections) {
      if (d.score <= 0.3) continue;
      (d.label == kShip ? a : b).push_back(d.box.center());
    }
    ASSERT_EQ(ab.per_scene[k].has_value(), !a.empty() && !b.empty());
    if (!ab.per_scene[k]) continue;
    EXPECT_NEAR(*ab.per_scene[k], chamfer_oracle(a, b), 1e-9);
    EXPECT_NEAR(*ab.per_scene[k], *ba.per_scene[k], 1e-9);
  }
  EXPECT_NEAR(*ab.mean, *ba.mean, 1e-9);
}

TEST(ConflictRate, GroundTruthHasNoConflicts) {
  const auto scenes = generated(30);
  const ConflictReport r = conflict_rate(scenes);
  EXPECT_GT(r.confident, 300u);
  EXPECT_EQ(r.conflicts, 0u);
  EXPECT_EQ(r.rate, 0.0);
}

TEST(ConflictRate, OneMislabelInTen) {
  SceneDetections s;
  s.zones = {Zone{ZoneType::kHarbor, {10, 10}, 6.0}};
  for (int i = 0; i < 10; ++i) s.detections.push_back(square(8 + 0.4 * i, 10, 0.3, i == 3 ? kPlane : kShip, 0.9));
  s.detections.push_back(square(10, 10, 0.3, kPlane, 0.4));       // not confident
  s.detections.push_back(square(10, 12, 0.3, kNumClasses, 0.99));  // background
  s.detections.push_back(square(30, 30, 0.3, kPlane, 0.99));       // outside every zone
  const auto r = conflict_rate(std::vector{s}, 0.5);
  EXPECT_EQ(r.confident, 11u);
  EXPECT_EQ(r.conflicts, 1u);
  const auto ten = conflict_rate(std::vector{with_detections({})}, 0.5);
  EXPECT_EQ(ten.rate, 0.0);
  s.detections.pop_back();
  EXPECT_NEAR(conflict_rate(std::vector{s}, 0.5).rate, 0.1, 1e-15);
}

TEST(ConflictRate, CorruptedSetMatchesEnumeration) {
  auto scenes = generated(20);
  Rng rng(3);
  std::size_t expected = 0, confident = 0;
  for (auto& s : scenes) {
    for (auto& d : s.detections) {
      d.score = rng.uniform(0.3, 1.0);
      if (rng.bernoulli(0.25)) d.label = static_cast<int>(rng.uniform_int(0, kNumClasses - 1));
      if (d.score <= 0.5) continue;
      ++confident;
      // Enumerate zones directly: nearest containing center.
      int zone = -1;
      double best = INFINITY;
      for (std::size_t z = 0; z < s.zones.size(); ++z) {
        const double dist = std::hypot(d.box.x() - s.zones[z].center.x, d.box.y() - s.zones[z].center.y);
        if (dist <= s.zones[z].radius && dist < best) best = dist, zone = static_cast<int>(z);
      }
      if (zone < 0) continue;
      const auto ok = zone_allowed_classes(s.zones[static_cast<std::size_t>(zone)].type);
      expected += std::find(ok.begin(), ok.end(), d.label) == ok.end();
    }
  }
  const ConflictReport r = conflict_rate(scenes, 0.5);
  EXPECT_EQ(r.confident, confident);
  EXPECT_EQ(r.conflicts, expected);
  EXPECT_GT(expected, 20u);
}

TEST(IntegratePr, HandTables) {
  // FP first, then two TPs of two ground truths.
  EXPECT_NEAR(integrate_pr(std::vector{0.0, 0.5, 2.0 / 3}, std::vector{0.0, 0.5, 1.0}, ApInterpolation::kAllPoints),
              2.0 / 3, 1e-12);
  // TP, FP, TP.
  const std::vector p{1.0, 0.5, 2.0 / 3}, r{0.5, 0.5, 1.0};
  EXPECT_NEAR(integrate_pr(p, r, ApInterpolation::kAllPoints), 0.5 + 0.5 * 2.0 / 3, 1e-12);
  EXPECT_NEAR(integrate_pr(p, r, ApInterpolation::kVoc07ElevenPoint), (6 * 1.0 + 5 * 2.0 / 3) / 11, 1e-12);
  EXPECT_EQ(integrate_pr(std::vector<double>{}, std::vector<double>{}, ApInterpolation::kAllPoints), 0.0);
}

TEST(AveragePrecision, PerfectDetectionsScoreOne) {
  const auto scenes = generated(10);
  const ApReport r = average_precision(scenes);
  ASSERT_TRUE(r.mean);
  EXPECT_NEAR(*r.mean, 1.0, 1e-12);
  for (const auto& c : r.per_class)
    if (c) EXPECT_NEAR(*c, 1.0, 1e-12);
}

TEST(AveragePrecision, NoDetectionsScoreZero) {
  auto scenes = generated(5);
  for (auto& s : scenes) s.detections.clear();
  const ApReport r = average_precision(scenes);
  ASSERT_TRUE(r.mean);
  EXPECT_EQ(*r.mean, 0.0);
}

TEST(AveragePrecision, CraftedFalsePositiveFirst) {
  SceneDetections s;
  s.gt_boxes = {OrientedBox(0, 0, 2, 2, 0), OrientedBox(10, 0, 2, 2, 0)};
  s.gt_classes = {kShip, kShip};
  s.detections = {square(5, 5, 2, kShip, 0.9), square(0, 0, 2, kShip, 0.8), square(10.1, 0, 2, kShip, 0.7)};
  const ApReport r = average_precision(std::vector{s});
  EXPECT_NEAR(*r.per_class[kShip], 2.0 / 3, 1e-12);
  for (int c = 0; c < kNumClasses; ++c)
    if (c != kShip) EXPECT_FALSE(r.per_class[static_cast<std::size_t>(c)]);
  EXPECT_NEAR(*r.mean, 2.0 / 3, 1e-12);
}

TEST(AveragePrecision, DuplicateAndWrongClassAreFalsePositives) {
  SceneDetections s;
  s.gt_boxes = {OrientedBox(0, 0, 2, 2, 0)};
  s.gt_classes = {kShip};
  s.detections = {square(0, 0, 2, kShip, 0.9), square(0, 0, 2, kShip, 0.8), square(0, 0, 2, kHarbor, 0.95)};
  // TP then a duplicate: P = (1, 0.5), R = (1, 1).
  EXPECT_NEAR(*average_precision(std::vector{s}).per_class[kShip], 1.0, 1e-12);
  s.detections[0].score = 0.7;
  // Duplicate ranked above the true positive cannot steal it twice: P = (1, 0.5).
  EXPECT_NEAR(*average_precision(std::vector{s}).per_class[kShip], 1.0, 1e-12);
  s.detections = {square(0.9, 0, 2, kShip, 0.9)};  // IoU 0.38
  EXPECT_EQ(*average_precision(std::vector{s}).per_class[kShip], 0.0);
  EXPECT_NEAR(*average_precision(std::vector{s}, 0.3).per_class[kShip], 1.0, 1e-12);
}

TEST(AveragePrecision, RemovingATruePositiveNeverHelps) {
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    SceneDetections s;
    for (int g = 0; g < 6; ++g) {
      s.gt_boxes.push_back(OrientedBox(5.0 * g, 0, 2, 2, 0));
      s.gt_classes.push_back(kShip);
    }
    // At most one hit per ground truth, so every hit is a true positive.
    for (int g = 0; g < 6; ++g)
      if (rng.bernoulli(0.6)) s.detections.push_back(square(5.0 * g + rng.normal(0, 0.05), 0, 2, kShip, rng.uniform()));
    for (int d = 0; d < 5; ++d) s.detections.push_back(square(rng.uniform(40, 80), 0, 2, kShip, rng.uniform()));
    const double base = *average_precision(std::vector{s}).per_class[kShip];
    for (std::size_t k = 0; k < s.detections.size(); ++k) {
      if (s.detections[k].box.x() > 35) continue;
      SceneDetections fewer = s;
      fewer.detections.erase(fewer.detections.begin() + static_cast<std::ptrdiff_t>(k));
      EXPECT_LE(*average_precision(std::vector{fewer}).per_class[kShip], base + 1e-12);
    }
  }
}

TEST(DetectionFiles, RoundTrip) {
  const auto scenes = generated(3);
  const auto j = detections_to_json(scenes, "abc123");
  std::string hash;
  const auto back = parse_detections_text(j.dump(2), "file.json", &hash);
  EXPECT_EQ(hash, "abc123");
  ASSERT_EQ(back.size(), scenes.size());
  EXPECT_EQ(detections_to_json(back, "abc123"), j);
}

TEST(DetectionFiles, ErrorsNameLineOrField) {
  auto expect_message = [](const std::string& text, const std::string& needle) {
    try {
      parse_detections_text(text, "d.json");
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_message("{\n\"schema\": \"roirel-detections-v1\",\n\"scenes\": [,]\n}", "d.json: line 3");
  expect_message(R"({"schema": "other", "scenes": []})", "$.schema");
  expect_message(R"({"schema": "roirel-detections-v1", "config_hash": "x", "scenes": [{"seed": 1}]})",
                 "$.scenes[0].zones: missing");
  expect_message(R"({"schema": "roirel-detections-v1", "config_hash": "x", "scenes": [{"seed": 1, "zones": [],
      "ground_truth": [], "detections": [{"box": [0,0,1,1,0], "label": "ship", "score": 1.5}]}]})",
                 "$.scenes[0].detections[0].score");
  expect_message(R"({"schema": "roirel-detections-v1", "config_hash": "x", "scenes": [{"seed": 1, "zones": [],
      "ground_truth": [{"box": [0,0,1,1,0], "class": "roundabout"}], "detections": []}]})",
                 "$.scenes[0].ground_truth[0].class");
  expect_message(R"({"schema": "roirel-detections-v1", "config_hash": "x", "scenes": [{"seed": 1, "zones": [],
      "ground_truth": [{"box": [0,0,-1,1,0], "class": "ship"}], "detections": []}]})",
                 "$.scenes[0].ground_truth[0].box");
}
