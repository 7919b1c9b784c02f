#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "sftmn/errors.hpp"
#include "sftmn/metrics.hpp"
#include "test_support.hpp"

namespace sftmn {
namespace {

constexpr int A = 0, B = 1, C = 2;

SegmentList segs(std::initializer_list<Segment> s) { return SegmentList(s); }

TEST(Segments, RunLengthEncoding) {
  EXPECT_EQ(labels_to_segments(std::vector<int>{A, A, B}), segs({{A, 0, 2}, {B, 2, 3}}));
  EXPECT_EQ(labels_to_segments(std::vector<int>{A}), segs({{A, 0, 1}}));
  EXPECT_EQ(labels_to_segments(std::vector<int>{A, B, A}).size(), 3u);
  EXPECT_THROW(labels_to_segments(std::vector<int>{}), ValidationError);
}

TEST(Segments, ExpansionRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto labels = testing::random_runs(rng, 1 + rng.uniform_int(0, 40), 4, 6);
    const SegmentList s = labels_to_segments(labels);
    EXPECT_NO_THROW(validate_segments(s));
    EXPECT_EQ(segments_to_labels(s), labels);
    EXPECT_EQ(labels_to_segments(segments_to_labels(s)), s);
  }
}

TEST(Segments, ValidationRejectsGapsAndRepeats) {
  EXPECT_THROW(validate_segments(segs({{A, 0, 2}, {B, 3, 4}})), ValidationError);
  EXPECT_THROW(validate_segments(segs({{A, 0, 2}, {A, 2, 4}})), ValidationError);
}

TEST(FrameScores, HandExample) {
  const FrameScores s = frame_scores(std::vector<int>{A, A, B, B}, std::vector<int>{A, B, B, B}, 2);
  EXPECT_NEAR(s.accuracy, 75.0, 1e-9);
  EXPECT_NEAR(s.precision, 75.0, 1e-9);
  EXPECT_NEAR(s.recall, 250.0 / 3.0, 1e-9);
  EXPECT_NEAR(s.jaccard, 175.0 / 3.0, 1e-9);
}

TEST(FrameScores, PerfectAndDisjoint) {
  const std::vector<int> s{A, B, B, C};
  const FrameScores p = frame_scores(s, s, 3);
  EXPECT_EQ(p.accuracy, 100);
  EXPECT_EQ(p.precision, 100);
  EXPECT_EQ(p.recall, 100);
  EXPECT_EQ(p.jaccard, 100);
  EXPECT_EQ(frame_scores(std::vector<int>(5, A), std::vector<int>(5, B), 2).accuracy, 0);
  EXPECT_THROW(frame_scores(std::vector<int>{A}, std::vector<int>{A, A}, 2), ValidationError);
}

TEST(FrameScores, GtOnlyClassSetDropsSpuriousClasses) {
  const std::vector<int> pred{A, A, C, B}, gt{A, A, B, B};
  const FrameScores u = frame_scores(pred, gt, 3, MacroClassSet::GtUnionPred);
  const FrameScores g = frame_scores(pred, gt, 3, MacroClassSet::GtOnly);
  EXPECT_NEAR(u.recall, 100.0 * (1 + 0.5 + 0) / 3, 1e-9);
  EXPECT_NEAR(g.recall, 100.0 * (1 + 0.5) / 2, 1e-9);
}

TEST(FrameScores, MatchesConfusionMatrixOracle) {
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const std::size_t T = 1 + rng.uniform_int(0, 60);
    const auto pred = testing::random_runs(rng, T, 5, 8);
    const auto gt = testing::random_runs(rng, T, 5, 8);
    const FrameScores s = frame_scores(pred, gt, 5);
    const auto o = oracle::frame_scores(pred, gt, 5);
    EXPECT_NEAR(s.accuracy, o.accuracy, 1e-9);
    EXPECT_NEAR(s.precision, o.precision, 1e-9);
    EXPECT_NEAR(s.recall, o.recall, 1e-9);
    EXPECT_NEAR(s.jaccard, o.jaccard, 1e-9);
  }
}

TEST(EditScore, HandExamples) {
  EXPECT_EQ(edit_score(segs({{A, 0, 1}, {B, 1, 3}}), segs({{A, 0, 2}, {B, 2, 3}})), 100);
  EXPECT_NEAR(edit_score(segs({{A, 0, 1}, {B, 1, 2}, {C, 2, 3}}), segs({{A, 0, 1}, {C, 1, 3}})),
              200.0 / 3.0, 1e-9);
  EXPECT_EQ(edit_score(segs({{A, 0, 1}}), segs({{B, 0, 1}})), 0);
}

TEST(F1, HandExamples) {
  const SegmentList gt = segs({{A, 0, 5}, {B, 5, 10}});
  EXPECT_NEAR(f1_at_overlap(segs({{A, 0, 10}}), gt, 0.5), 200.0 / 3.0, 1e-9);
  for (double k : kF1Overlaps) EXPECT_EQ(f1_at_overlap(gt, gt, k), 100);
  EXPECT_EQ(f1_at_overlap(segs({{C, 0, 10}}), gt, 0.1), 0);
}

TEST(F1, ThresholdIsInclusive) {
  // IoU exactly 0.25 counts as a hit at k = 0.25.
  const SegmentList gt = segs({{A, 0, 1}, {B, 1, 4}});
  const SegmentList pred = segs({{A, 0, 4}});
  EXPECT_NEAR(f1_at_overlap(pred, gt, 0.25), 200.0 / 3.0, 1e-9);
  EXPECT_EQ(f1_at_overlap(pred, gt, 0.26), 0);
}

TEST(F1, AverageOfThree) {
  EXPECT_NEAR(f1_avg(85.1, 83.4, 76.0), 81.5, 1e-9);
  EXPECT_EQ(f1_avg(100, 100, 100), 100);
  EXPECT_EQ(f1_avg(0, 0, 0), 0);
}

TEST(SegmentalMetrics, PropertiesOnRandomPairs) {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    const std::size_t T = 1 + rng.uniform_int(0, 50);
    auto pred = testing::random_runs(rng, T, 4, 7);
    auto gt = testing::random_runs(rng, T, 4, 7);
    const SegmentList p = labels_to_segments(pred), g = labels_to_segments(gt);
    // Self-evaluation identity.
    EXPECT_EQ(edit_score(g, g), 100);
    for (double k : kF1Overlaps) EXPECT_EQ(f1_at_overlap(g, g, k), 100);
    // Non-increasing in k.
    double prev = 101;
    for (double k : {0.0, 0.1, 0.25, 0.5, 0.75, 1.0}) {
      const double f = f1_at_overlap(p, g, k);
      EXPECT_LE(f, prev);
      prev = f;
    }
    // Class relabelling invariance.
    std::vector<int> perm{2, 0, 3, 1};
    for (int& l : pred) l = perm[l];
    for (int& l : gt) l = perm[l];
    const SegmentalScores a = segmental_scores(segments_to_labels(p), segments_to_labels(g));
    const SegmentalScores b = segmental_scores(pred, gt);
    EXPECT_EQ(a.edit, b.edit);
    EXPECT_EQ(a.f1_at, b.f1_at);
  }
}

TEST(Aggregate, MeanAndPopulationStd) {
  EXPECT_THROW(mean_std(std::vector<double>{}), ValidationError);
  const MeanStd one = mean_std(std::vector<double>{42});
  EXPECT_EQ(one.std, 0);
  const MeanStd two = mean_std(std::vector<double>{90, 100});
  EXPECT_EQ(two.mean, 95);
  EXPECT_EQ(two.std, 5);
}

TEST(Aggregate, FortyVideosMatchResummation) {
  Rng rng(4);
  std::vector<FrameScores> rows;
  for (int i = 0; i < 40; ++i) {
    const auto gt = testing::random_runs(rng, 100, 6, 20);
    auto pred = gt;
    for (int& l : pred)
      if (rng.uniform() < 0.2) l = static_cast<int>(rng.uniform_int(0, 5));
    rows.push_back(frame_scores(pred, gt, 6));
  }
  const FrameAggregate agg = aggregate(rows);
  std::vector<double> acc, jac;
  for (const auto& r : rows) {
    acc.push_back(r.accuracy);
    jac.push_back(r.jaccard);
  }
  EXPECT_NEAR(agg.accuracy.mean, oracle::resum(acc).mean, 1e-9);
  EXPECT_NEAR(agg.accuracy.std, oracle::resum(acc).std, 1e-9);
  EXPECT_NEAR(agg.jaccard.mean, oracle::resum(jac).mean, 1e-9);
  EXPECT_NEAR(agg.jaccard.std, oracle::resum(jac).std, 1e-9);
}

TEST(Report, JsonAndCsvColumns) {
  std::vector<VideoScores> rows{{"v1", frame_scores(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 2),
                                 segmental_scores(std::vector<int>{0, 1}, std::vector<int>{0, 1})},
                                {"v2", frame_scores(std::vector<int>{0, 0}, std::vector<int>{0, 1}, 2),
                                 segmental_scores(std::vector<int>{0, 0}, std::vector<int>{0, 1})}};
  const EvaluationReport report = make_report(rows);
  const auto j = report_to_json(report);
  ASSERT_EQ(j["videos"].size(), 2u);
  EXPECT_EQ(j["videos"][0]["video_id"], "v1");
  for (const char* col : {"accuracy", "precision", "recall", "jaccard", "edit", "f1@10", "f1@25",
                          "f1@50", "f1_avg"}) {
    EXPECT_TRUE(j["aggregate"].contains(col)) << col;
    EXPECT_TRUE(j["aggregate"][col].contains("mean"));
    EXPECT_TRUE(j["aggregate"][col].contains("std"));
  }
  EXPECT_EQ(j["aggregate"]["accuracy"]["mean"].get<double>(), 75.0);
  EXPECT_EQ(j["aggregate"]["accuracy"]["std"].get<double>(), 25.0);
  const std::string csv = report_to_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "video_id,accuracy,precision,recall,jaccard,edit,f1@10,f1@25,f1@50,f1_avg");
  EXPECT_NE(csv.find("\nmean,75.000000,"), std::string::npos);
  EXPECT_NE(csv.find("\nstd,25.000000,"), std::string::npos);
}

}  // namespace
}  // namespace sftmn
