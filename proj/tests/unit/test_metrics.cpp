#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>
#include <random>

#include "layoutforge/losses.hpp"
#include "layoutforge/metrics.hpp"
#include "fixtures.hpp"

using namespace layoutforge;
using lf_test::element;
using lf_test::layout_of;

namespace {

Layout mirrored(Layout l) {
  for (auto& e : l.elements) e.geometry.xc = 1.0 - e.geometry.xc;
  return l;
}

Layout random_layout(std::mt19937_64& rng, int n) {
  std::vector<Element> els;
  for (const auto& g : lf_test::random_boxes(rng, n)) els.push_back(element(kHeadline, g.xc, g.yc, g.w, g.h));
  return layout_of(std::move(els));
}

}  // namespace

TEST(OverlapIndex, SyntheticCorpusIsZero) {
  auto corpus = lf_test::small_corpus(100);
  EXPECT_EQ(overlap_index(corpus), 0.0);
  EXPECT_EQ(alignment_index(corpus), 0.0);
}

TEST(OverlapIndex, DuplicatedPairsScoreTwo) {
  std::vector<Layout> corpus;
  std::mt19937_64 rng(1);
  for (const auto& g : lf_test::random_boxes(rng, 20))
    corpus.push_back(layout_of({element(kLogo, g.xc, g.yc, g.w, g.h), element(kButton, g.xc, g.yc, g.w, g.h)}));
  EXPECT_NEAR(overlap_index(corpus), 2.0, 1e-12);
}

TEST(OverlapIndex, IsTheMeanOfTheLoss) {
  std::mt19937_64 rng(2);
  std::vector<Layout> corpus;
  double overlap = 0, alignment = 0;
  for (int i = 0; i < 30; ++i) {
    corpus.push_back(random_layout(rng, 2 + i % 5));
    std::vector<Geometry> g;
    for (const auto& e : corpus.back().elements) g.push_back(e.geometry);
    overlap += overlap_loss(g);
    alignment += alignment_loss(g);
  }
  EXPECT_NEAR(overlap_index(corpus), overlap / 30, 1e-12);
  EXPECT_NEAR(alignment_index(corpus), alignment / 30, 1e-12);
  EXPECT_THROW(overlap_index(std::span<const Layout>{}), ValidationError);
}

TEST(AlignmentIndex, HalfGapConstruction) {
  auto l = layout_of({element(kLogo, 0.25, 0.25, 0.1, 0.1), element(kButton, 0.75, 0.75, 0.1, 0.1)});
  std::vector<Layout> corpus{l, l};
  EXPECT_NEAR(alignment_index(corpus), 2 * std::log(2.0), 1e-12);
}

TEST(Symmetry, CenteredBoxIsFullySymmetric) {
  auto l = layout_of({element(kProductImage, 0.5, 0.5, 0.5, 0.3)});
  EXPECT_DOUBLE_EQ(symmetry_score(l, 64, 64), 1.0);
  EXPECT_DOUBLE_EQ(symmetry_score(l), 1.0);
}

TEST(Symmetry, LeftHalfOnlyScoresZero) {
  auto l = layout_of({element(kLogo, 0.2, 0.3, 0.3, 0.2)});
  EXPECT_DOUBLE_EQ(symmetry_score(l, 64, 64), 0.0);
}

TEST(Symmetry, BlankScoresOne) {
  Layout l;
  l.canvas = Canvas::from_size(64, 64);
  EXPECT_DOUBLE_EQ(symmetry_score(l), 1.0);
}

TEST(Symmetry, PartialOverlapHandComputed) {
  // one box covering columns [0, 32) and another covering [16, 32) mirrored to [32, 48)
  auto l = layout_of({element(kLogo, 0.25, 0.5, 0.5, 0.25), element(kButton, 0.625, 0.5, 0.25, 0.25)});
  // occupied: columns 0..47 (48 columns); mirrored pairs exist for columns 16..47 (32 columns)
  EXPECT_NEAR(symmetry_score(l, 64, 64), 32.0 / 48.0, 1e-12);
}

TEST(Symmetry, InvariantUnderMirroring) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    auto l = random_layout(rng, 4);
    l.canvas = Canvas::from_size(100 + i, 80);
    EXPECT_DOUBLE_EQ(symmetry_score(l), symmetry_score(mirrored(l)));
  }
}

TEST(AreaDifference, PerfectAreas) {
  auto corpus = lf_test::small_corpus(30);
  for (const auto& [cls, st] : area_difference_stats(corpus)) {
    EXPECT_NEAR(st.mean, 0.0, 1e-12) << cls;
    EXPECT_NEAR(st.stddev, 0.0, 1e-12) << cls;
    EXPECT_GT(st.count, 0);
  }
}

TEST(AreaDifference, UniformlyLarger) {
  auto corpus = lf_test::small_corpus(30);
  std::vector<std::vector<AttributeVector>> conditions;
  for (auto& l : corpus) {
    std::vector<AttributeVector> c;
    for (auto& e : l.elements) {
      c.push_back(e.attributes);
      e.geometry.w *= 1.4;
    }
    conditions.push_back(c);
  }
  auto stats = area_difference_stats(corpus, conditions);
  EXPECT_EQ(stats.size(), 6u);
  for (const auto& [cls, st] : stats) {
    EXPECT_NEAR(st.mean, 0.4, 1e-9);
    EXPECT_NEAR(st.stddev, 0.0, 1e-9);
  }
}

TEST(AreaDifference, PopulationStandardDeviation) {
  auto l1 = layout_of({element(kLogo, 0.5, 0.5, 0.2, 0.2)});
  auto l2 = layout_of({element(kLogo, 0.5, 0.5, 0.2, 0.2)});
  std::vector<Layout> corpus{l1, l2};
  std::vector<std::vector<AttributeVector>> cond{{{0.04 / 1.2, 0, 0}}, {{0.04 / 1.6, 0, 0}}};
  auto st = area_difference_stats(corpus, cond).at(kLogo);
  EXPECT_NEAR(st.mean, 0.4, 1e-12);
  EXPECT_NEAR(st.stddev, 0.2, 1e-12);
  EXPECT_EQ(st.count, 2);
}

TEST(Retention, PerfectlyOrderedLayouts) {
  auto corpus = lf_test::small_corpus(40);
  std::vector<double> t{0.0, 0.5, 0.8, 1.0};
  for (double v : order_retention_curve(corpus, t)) EXPECT_EQ(v, 1.0);
  for (const auto& l : corpus) EXPECT_EQ(order_retention(l), 1.0);
}

TEST(Retention, HalfCorrect) {
  // distance ranks are 0,1,2,3; stored orders swap the last two
  auto l = layout_of({element(kLogo, 0.1, 0.1, 0.1, 0.1), element(kHeadline, 0.3, 0.3, 0.1, 0.1),
                      element(kButton, 0.5, 0.5, 0.1, 0.1), element(kOffer, 0.7, 0.7, 0.1, 0.1)});
  const int orders[] = {0, 1, 3, 2};
  for (int i = 0; i < 4; ++i) l.elements[i].order = orders[i];
  EXPECT_DOUBLE_EQ(order_retention(l), 0.5);
  std::vector<Layout> one{l};
  std::vector<double> t{0.25, 0.5, 0.5000001, 0.75};
  EXPECT_EQ(order_retention_curve(one, t), (std::vector<double>{1, 1, 0, 0}));
}

TEST(Retention, EmptyThresholdsGiveEmptyCurve) {
  auto corpus = lf_test::small_corpus(5);
  EXPECT_TRUE(order_retention_curve(corpus, std::vector<double>{}).empty());
}

TEST(Retention, CurveIsNonIncreasing) {
  std::mt19937_64 rng(4);
  std::vector<Layout> corpus;
  for (int i = 0; i < 60; ++i) {
    auto l = random_layout(rng, 2 + i % 5);
    std::vector<int> o(l.size());
    std::iota(o.begin(), o.end(), 0);
    std::shuffle(o.begin(), o.end(), rng);
    for (int k = 0; k < l.size(); ++k) l.elements[k].order = o[k];
    corpus.push_back(l);
  }
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(i / 20.0);
  auto curve = order_retention_curve(corpus, t);
  for (size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i], curve[i - 1]);
  for (double v : curve) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Retention, NeedsOrders) {
  auto l = layout_of({element(kLogo, 0.1, 0.1, 0.1, 0.1), element(kHeadline, 0.3, 0.3, 0.1, 0.1)});
  EXPECT_THROW(order_retention(l), ValidationError);
}

TEST(Report, EvaluateJsonAndTable) {
  auto corpus = lf_test::small_corpus(20);
  MetricOptions options;
  options.orders = true;
  auto report = evaluate_layouts(corpus, options);
  EXPECT_EQ(report.overlap_index, 0.0);
  EXPECT_EQ(report.alignment_index, 0.0);
  EXPECT_GT(report.symmetry_score, 0.0);
  ASSERT_EQ(report.order_retention.size(), options.thresholds.size());
  auto j = to_json(report);
  EXPECT_EQ(j["overlap_index"], 0.0);
  EXPECT_TRUE(j["area_difference"].contains("product_image"));
  auto table = format_metric_table({{"corpus", report}});
  EXPECT_NE(table.find("overlap"), std::string::npos);
  EXPECT_NE(table.find("corpus"), std::string::npos);
}
