#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "mockforge/quality.hpp"
#include "test_util.hpp"

using namespace mockforge;
using namespace mockforge::quality;

namespace {

ElementBox box(double x, double y, double w, double h, int cls = 0) {
  ElementBox e;
  e.x = x;
  e.y = y;
  e.w = w;
  e.h = h;
  e.class_id = cls;
  return e;
}

// Independent oracle: count covering boxes at each cell center of a res x res raster.
double raster_overlap(const std::vector<ElementBox>& els, int res = 512) {
  int hits = 0;
  for (int i = 0; i < res; ++i) {
    const double cy = (i + 0.5) / res;
    for (int j = 0; j < res; ++j) {
      const double cx = (j + 0.5) / res;
      int c = 0;
      for (const auto& e : els) c += (cx >= e.x && cx < e.right() && cy >= e.y && cy < e.bottom());
      hits += c >= 2;
    }
  }
  return static_cast<double>(hits) / (res * res);
}

MockupCandidate cand(std::vector<ElementBox> els) {
  MockupCandidate c;
  c.elements = std::move(els);
  return c;
}

MetricCalibration three_point_calibration() {
  return MetricCalibration({std::vector<double>{0.0, 0.1, 0.2}, std::vector<double>{0.0, 0.05, 0.1},
                            std::vector<double>{0.0, 0.02, 0.04}});
}

}  // namespace

TEST(Overlap, HandFixture) {
  const std::vector<ElementBox> ab{box(0, 0, 0.5, 0.5), box(0.25, 0.25, 0.5, 0.5)};
  EXPECT_NEAR(metric_overlap(ab), 0.0625, 1e-12);
  EXPECT_NEAR(raster_overlap(ab), 0.0625, 1e-3);
}

TEST(Overlap, DisjointAndFullScreen) {
  EXPECT_EQ(metric_overlap(std::vector{box(0, 0, 0.2, 0.2), box(0.5, 0.5, 0.2, 0.2)}), 0.0);
  EXPECT_DOUBLE_EQ(metric_overlap(std::vector{box(0, 0, 1, 1), box(0, 0, 1, 1)}), 1.0);
  EXPECT_EQ(metric_overlap(std::vector{box(0, 0, 1, 1)}), 0.0);
  EXPECT_EQ(metric_overlap({}), 0.0);
}

TEST(Overlap, TripleCoverCountedOnce) {
  const std::vector<ElementBox> els{box(0, 0, 0.5, 0.5), box(0, 0, 0.5, 0.5), box(0, 0, 0.5, 0.5)};
  EXPECT_DOUBLE_EQ(metric_overlap(els), 0.25);
}

TEST(Overlap, MatchesRasterOracleOnRandomLayouts) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto els = fixtures::random_layout(rng, 1 + trial % 20);
    EXPECT_NEAR(metric_overlap(els), raster_overlap(els, 128), 0.01) << "trial " << trial;
  }
}

TEST(Iou, HandFixtures) {
  const std::vector<ElementBox> ab{box(0, 0, 0.5, 0.5), box(0.25, 0.25, 0.5, 0.5)};
  EXPECT_NEAR(metric_iou(ab), 0.142857, 1e-6);
  EXPECT_DOUBLE_EQ(metric_iou(std::vector{box(0.1, 0.1, 0.3, 0.3), box(0.1, 0.1, 0.3, 0.3)}), 1.0);
  // three boxes, one overlapping pair
  const std::vector<ElementBox> three{ab[0], ab[1], box(0.8, 0.8, 0.1, 0.1)};
  EXPECT_NEAR(metric_iou(three), pair_iou(ab[0], ab[1]) / 3.0, 1e-12);
}

TEST(Alignment, HandFixtures) {
  EXPECT_EQ(metric_alignment(std::vector{box(0.1, 0.1, 0.2, 0.1), box(0.1, 0.6, 0.5, 0.2)}), 0.0);
  // left edges 0.1 / 0.15; every other line pair is farther apart
  const std::vector<ElementBox> els{box(0.10, 0.0, 0.2, 0.1), box(0.15, 0.5, 0.4, 0.3)};
  EXPECT_DOUBLE_EQ(metric_alignment(els), 0.15 - 0.10);
  EXPECT_EQ(metric_alignment(std::vector{box(0.3, 0.3, 0.1, 0.1)}), 0.0);
}

TEST(Metrics, PermutationAndSortInvariance) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    auto els = fixtures::random_layout(rng, 2 + trial % 10);
    const auto s0 = score(els);
    std::shuffle(els.begin(), els.end(), rng);
    const auto s1 = score(els);
    const auto sorted = canonical_sort(els);
    const auto s2 = score(sorted);
    EXPECT_NEAR(s0.overlap, s1.overlap, 1e-12);
    EXPECT_NEAR(s0.iou, s1.iou, 1e-12);
    EXPECT_NEAR(s0.alignment, s2.alignment, 1e-12);
    EXPECT_NEAR(s0.overlap, s2.overlap, 1e-12);
  }
}

TEST(Calibration, MeansMatchHandAverages) {
  const std::vector<std::vector<ElementBox>> views{
      {box(0, 0, 0.5, 0.5), box(0.25, 0.25, 0.5, 0.5)},
      {box(0, 0, 0.2, 0.2), box(0.5, 0.5, 0.2, 0.2)},
      {box(0.1, 0.1, 0.3, 0.3)},
  };
  const auto cal = calibrate(views);
  EXPECT_NEAR(cal.mean(Metric::overlap), 0.0625 / 3.0, 1e-12);
  EXPECT_NEAR(cal.mean(Metric::iou), (0.0625 / 0.4375) / 3.0, 1e-12);
  const double align0 = 0.25, align1 = 0.5;  // every matching line pair is offset by the same shift
  EXPECT_NEAR(cal.mean(Metric::alignment), (align0 + align1) / 3.0, 1e-12);
  EXPECT_THROW(calibrate({}), DataError);
}

TEST(Calibration, IdenticalScreensGiveStepCdf) {
  const std::vector<std::vector<ElementBox>> views(3, {box(0, 0, 0.5, 0.5), box(0.25, 0.25, 0.5, 0.5)});
  const auto cal = calibrate(views);
  EXPECT_EQ(cal.cdf(Metric::overlap, 0.0625), 0.0);
  EXPECT_EQ(cal.cdf(Metric::overlap, 0.06), 0.0);
  EXPECT_EQ(cal.cdf(Metric::overlap, 0.07), 1.0);
}

TEST(Calibration, JsonRoundTrip) {
  const auto cal = three_point_calibration();
  const auto back = MetricCalibration::from_json(nlohmann::json::parse(cal.to_json().dump()));
  for (Metric m : kAllMetrics) {
    EXPECT_EQ(back.mean(m), cal.mean(m));
    EXPECT_EQ(back.cdf(m, 0.03), cal.cdf(m, 0.03));
  }
}

TEST(Cdf, InterpolatesBetweenSupportPoints) {
  const auto cal = three_point_calibration();
  EXPECT_EQ(cal.cdf(Metric::overlap, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(cal.cdf(Metric::overlap, 0.1), 0.5);
  EXPECT_DOUBLE_EQ(cal.cdf(Metric::overlap, 0.05), 0.25);
  EXPECT_EQ(cal.cdf(Metric::overlap, 0.2), 1.0);
  EXPECT_EQ(cal.cdf(Metric::overlap, 5.0), 1.0);
}

TEST(Filter, KeepsOnlyCandidatesBelowEveryMean) {
  const auto cal = three_point_calibration();  // means: 0.1, 0.05, 0.02
  auto scored = [](double o, double i, double a) {
    MockupCandidate c;
    c.scores = QualityScores{o, i, a, 0.0};
    return c;
  };
  std::vector<MockupCandidate> in{scored(0.05, 0.01, 0.01), scored(0.05, 0.01, 0.03), scored(0.2, 0.2, 0.2)};
  const auto kept = filter_candidates(in, cal);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].scores->alignment, 0.01);
  EXPECT_TRUE(filter_candidates({scored(1, 1, 1)}, cal).empty());
}

TEST(Rerank, HandScores) {
  const auto cal = three_point_calibration();
  EXPECT_EQ(rerank_score({0.0, 0.0, 0.0, 0.0}, cal), 1.0);
  EXPECT_DOUBLE_EQ(rerank_score({0.1, 0.05, 0.02, 0.0}, cal), 0.125);
  EXPECT_DOUBLE_EQ(rerank_score({0.1, 0.05, 0.02, 0.0}, cal, RerankMode::literal), 0.125);
  EXPECT_EQ(rerank_score({0.0, 0.0, 0.0, 0.0}, cal, RerankMode::literal), 0.0);
}

TEST(Rerank, KeepsCeilHalfSortedDescending) {
  const auto cal = three_point_calibration();
  std::mt19937_64 rng(5);
  for (std::size_t n = 1; n <= 11; ++n) {
    std::vector<MockupCandidate> in;
    for (std::size_t i = 0; i < n; ++i) in.push_back(cand(fixtures::random_layout(rng, 3)));
    const auto out = rerank_candidates(in, cal);
    EXPECT_EQ(out.size(), (n + 1) / 2);
    for (std::size_t i = 1; i < out.size(); ++i) EXPECT_GE(out[i - 1].scores->rerank_score, out[i].scores->rerank_score);
  }
}

TEST(Rerank, AntitoneInEachMetric) {
  const auto cal = three_point_calibration();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.05, 0.25);
  for (int trial = 0; trial < 200; ++trial) {
    QualityScores s{u(rng), u(rng), u(rng), 0.0};
    const double base = rerank_score(s, cal);
    for (Metric m : kAllMetrics) {
      QualityScores t = s;
      (m == Metric::overlap ? t.overlap : m == Metric::iou ? t.iou : t.alignment) += 0.01;
      EXPECT_LE(rerank_score(t, cal), base);
    }
  }
}

TEST(Snap, HandValues) {
  EXPECT_DOUBLE_EQ(snap_element(box(0.49, 0.0, 0.25, 0.25)).x, 0.5);
  EXPECT_DOUBLE_EQ(snap_element(box(0.2, 0.2, 0.001, 0.3)).w, 0.03125);
  const auto e = snap_element(box(0.99, 0.0, 0.5, 0.5));
  EXPECT_LE(e.right(), 1.0);
}

TEST(Snap, IdempotentAndValidOnThousandCandidates) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto once = snap_to_grid(cand(fixtures::random_layout(rng, 1 + trial % 12)));
    const auto twice = snap_to_grid(once);
    ASSERT_EQ(once.elements, twice.elements);
    for (const auto& e : once.elements) EXPECT_TRUE(box_is_valid(e));
  }
}

TEST(Matching, FindsOptimumOnSmallMatrices) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + trial % 5, c = 1 + (trial / 5) % 5;
    std::vector<std::vector<double>> w(r, std::vector<double>(c));
    for (auto& row : w)
      for (auto& v : row) v = u(rng);
    const auto m = max_weight_matching(w);
    double got = 0.0;
    std::vector<int> used(c, 0);
    for (std::size_t i = 0; i < r; ++i) {
      if (m[i] < 0) continue;
      ASSERT_FALSE(used[m[i]]++);
      got += w[i][m[i]];
    }
    // brute force over column permutations
    std::vector<int> perm(std::max(r, c));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
      double t = 0.0;
      for (std::size_t i = 0; i < r; ++i)
        if (static_cast<std::size_t>(perm[i]) < c) t += w[i][perm[i]];
      best = std::max(best, t);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(got, best, 1e-12);
  }
}

TEST(DocSim, HandValues) {
  const std::vector<ElementBox> a{box(0.25, 0.25, 0.5, 0.5, 1)};
  EXPECT_DOUBLE_EQ(docsim(a, a), 0.5);
  const std::vector<ElementBox> b{box(0.25, 0.25, 0.5, 0.5, 2)};
  EXPECT_EQ(docsim(a, b), 0.0);
  EXPECT_EQ(docsim({}, a), 0.0);
}

TEST(DocSim, SymmetricAndSelfMaximal) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 8;
    const auto a = fixtures::random_layout(rng, n, 3);
    const auto b = fixtures::random_layout(rng, n, 3);
    const auto c = fixtures::random_layout(rng, 1 + (trial + 3) % 8, 3);
    EXPECT_NEAR(docsim(a, c), docsim(c, a), 1e-12);
    EXPECT_GE(docsim(a, a) + 1e-12, docsim(a, b));
  }
}

TEST(SetMeasures, DiversityAndRelevance) {
  std::mt19937_64 rng(43);
  const auto gt = fixtures::random_layout(rng, 4, 2);
  std::vector<MockupCandidate> same(5, cand(gt));
  EXPECT_NEAR(diversity(same), docsim(gt, gt), 1e-12);
  const std::vector<MockupCandidate> two{cand(gt), cand(fixtures::random_layout(rng, 4, 2))};
  EXPECT_NEAR(diversity(two), docsim(two[0].elements, two[1].elements), 1e-12);
  EXPECT_THROW(diversity(std::span(two).first(1)), UsageError);

  std::vector<MockupCandidate> set{cand(fixtures::random_layout(rng, 4, 2))};
  double prev = relevance(set, gt);
  for (int i = 0; i < 5; ++i) {
    set.push_back(cand(fixtures::random_layout(rng, 4, 2)));
    const double r = relevance(set, gt);
    EXPECT_GE(r, prev);
    prev = r;
  }
  set.push_back(cand(gt));
  EXPECT_DOUBLE_EQ(relevance(set, gt), docsim(gt, gt));
  EXPECT_THROW(relevance({}, gt), UsageError);
}

TEST(Table2, Format) {
  const std::vector<Table2Row> rows{{"UI Generator", 0.1, 0.2, 0.3, 0.04, 0.07},
                                    {"Data (test set)", 0.05, 0.25, 0.5, std::nullopt, std::nullopt}};
  EXPECT_EQ(format_table2(rows),
            "method\tIoU\tOverlap\tAlignment\tDiversity\tRelevance\n"
            "UI Generator\t0.1000\t0.2000\t0.3000\t0.0400\t0.0700\n"
            "Data (test set)\t0.0500\t0.2500\t0.5000\t-\t-\n");
}
