#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "layoutforge/render.hpp"
#include "fixtures.hpp"
#include "kinks.hpp"

using namespace layoutforge;
using lf_test::element;
using lf_test::layout_of;

namespace {

torch::Tensor box(double xc, double yc, double w, double h) {
  return torch::tensor({xc, yc, w, h}, torch::kFloat64);
}

torch::Tensor one_hot(int cls, int m = 6) {
  auto p = torch::zeros({m}, torch::kFloat64);
  p[cls] = 1.0;
  return p;
}

}  // namespace

TEST(Wireframe, EdgeMidlinePixelIsOne) {
  // box spans pixels 4..12 on a 16x16 canvas; (u,v) = (8,4) lies on the top edge
  auto f = render_element_wireframe(box(0.5, 0.5, 0.5, 0.5), 16, 16);
  ASSERT_EQ(f.sizes(), (torch::IntArrayRef{16, 16}));
  EXPECT_DOUBLE_EQ(f[4][8].item<double>(), 1.0);
  EXPECT_DOUBLE_EQ(f[8][4].item<double>(), 1.0);
}

TEST(Wireframe, InteriorPixelIsZero) {
  auto f = render_element_wireframe(box(0.5, 0.5, 0.5, 0.5), 16, 16);
  EXPECT_DOUBLE_EQ(f[8][8].item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(f[6][7].item<double>(), 0.0);
}

TEST(Wireframe, HalfPixelOffEdgeIsHalf) {
  // top edge at v = 4.5, bottom at 11.5
  auto f = render_element_wireframe(box(0.5, 0.5, 0.5, 7.0 / 16), 16, 16);
  EXPECT_NEAR(f[4][8].item<double>(), 0.5, 1e-12);
  EXPECT_NEAR(f[5][8].item<double>(), 0.5, 1e-12);
}

TEST(Wireframe, ValuesInUnitInterval) {
  std::mt19937_64 rng(1);
  auto geoms = lf_test::to_tensor(lf_test::random_boxes(rng, 20));
  auto f = render_element_wireframe(geoms, 24, 16);
  EXPECT_GE(f.min().item<double>(), 0.0);
  EXPECT_LE(f.max().item<double>(), 1.0);
}

TEST(Compose, SingleOneHotElement) {
  auto g = box(0.4, 0.5, 0.3, 0.6).unsqueeze(0);
  auto img = compose_layout_image(one_hot(2).unsqueeze(0), g, 16, 16);
  ASSERT_EQ(img.sizes(), (torch::IntArrayRef{6, 16, 16}));
  auto f = render_element_wireframe(g, 16, 16)[0];
  for (int c = 0; c < 6; ++c) {
    if (c == 2)
      EXPECT_TRUE(torch::equal(img[c], f));
    else
      EXPECT_EQ(img[c].abs().sum().item<double>(), 0.0);
  }
}

TEST(Compose, SameClassTakesPixelwiseMax) {
  auto g = torch::stack({box(0.4, 0.5, 0.3, 0.6), box(0.55, 0.45, 0.5, 0.2)});
  auto p = torch::stack({one_hot(3), one_hot(3)});
  auto img = compose_layout_image(p, g, 16, 16);
  auto f = render_element_wireframe(g, 16, 16);
  EXPECT_TRUE(torch::equal(img[3], torch::maximum(f[0], f[1])));
}

TEST(Compose, ScalarProbabilityScalesChannel) {
  auto g = box(0.4, 0.5, 0.3, 0.6).unsqueeze(0);
  auto p = torch::zeros({1, 6}, torch::kFloat64);
  p[0][1] = 0.5;
  p[0][4] = 0.5;
  auto img = compose_layout_image(p, g, 16, 16);
  auto f = render_element_wireframe(g, 16, 16)[0];
  EXPECT_TRUE(torch::allclose(img[1], 0.5 * f, 0, 1e-15));
}

TEST(Compose, PermutationInvariant) {
  std::mt19937_64 rng(2);
  auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 5));
  auto p = torch::softmax(torch::randn({5, 6}, torch::kFloat64), 1);
  auto perm = torch::tensor({3, 0, 4, 1, 2}, torch::kLong);
  auto a = compose_layout_image(p, g, 20, 20);
  auto b = compose_layout_image(p.index_select(0, perm), g.index_select(0, perm), 20, 20);
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(Compose, MonotoneInProbability) {
  std::mt19937_64 rng(3);
  auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 4));
  auto p = torch::rand({4, 6}, torch::kFloat64) * 0.5;
  auto base = compose_layout_image(p, g, 20, 20);
  for (int trial = 0; trial < 10; ++trial) {
    auto q = p.clone();
    q[trial % 4][trial % 6] += 0.3;
    auto img = compose_layout_image(q, g, 20, 20);
    EXPECT_TRUE((img >= base).all().item<bool>());
  }
}

TEST(Compose, BatchedMatchesUnbatched) {
  std::mt19937_64 rng(4);
  auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 6)).view({2, 3, 4});
  auto p = torch::softmax(torch::randn({2, 3, 6}, torch::kFloat64), 2);
  auto batched = compose_layout_image(p, g, 12, 10);
  ASSERT_EQ(batched.sizes(), (torch::IntArrayRef{2, 6, 10, 12}));
  for (int b = 0; b < 2; ++b) EXPECT_TRUE(torch::equal(batched[b], compose_layout_image(p[b], g[b], 12, 10)));
}

TEST(Compose, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const int W = 16, H = 16;
  int checked = 0;
  double worst = 0.0;
  while (checked < 100) {
    auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 2));
    auto p = torch::softmax(torch::randn({2, 6}, torch::kFloat64), 1);
    if (!lf_test::off_kinks(g, p, W, H, 0.02)) continue;
    auto weights = torch::rand({6, H, W}, torch::kFloat64);
    auto f = [&](const torch::Tensor& x) { return (compose_layout_image(p, x, W, H) * weights).sum(); };
    worst = std::max(worst, lf_test::fd_relative_error(f, g));
    ++checked;
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Dropout, ExtremeKeepProbabilities) {
  auto ones = sample_dropout_mask(50, 1.0, 1);
  auto zeros = sample_dropout_mask(50, 0.0, 1);
  for (auto b : ones.bits) EXPECT_EQ(b, 1);
  for (auto b : zeros.bits) EXPECT_EQ(b, 0);
}

TEST(Dropout, KeepRateWithinBinomialBand) {
  auto m = sample_dropout_mask(10000, 0.5, 7);
  double mean = 0;
  for (auto b : m.bits) mean += b;
  mean /= m.bits.size();
  EXPECT_GE(mean, 0.485);
  EXPECT_LE(mean, 0.515);
}

TEST(Dropout, ReproducibleFromSeed) {
  EXPECT_EQ(sample_dropout_mask(100, 0.5, 9).bits, sample_dropout_mask(100, 0.5, 9).bits);
  EXPECT_NE(sample_dropout_mask(100, 0.5, 9).bits, sample_dropout_mask(100, 0.5, 10).bits);
  EXPECT_TRUE(torch::equal(sample_dropout_masks(4, 6, 0.5, 3), sample_dropout_masks(4, 6, 0.5, 3)));
  EXPECT_THROW(sample_dropout_mask(3, 1.5, 0), ValidationError);
}

TEST(Dropout, AllOnesMaskIsIdentity) {
  std::mt19937_64 rng(6);
  auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 4));
  auto p = torch::softmax(torch::randn({4, 6}, torch::kFloat64), 1);
  auto full = compose_layout_image(p, g, 16, 16);
  auto masked = compose_dropout_image(p, g, torch::ones({4}, torch::kFloat64), 16, 16);
  EXPECT_TRUE(torch::equal(full, masked));
  EXPECT_EQ(compose_dropout_image(p, g, torch::zeros({4}, torch::kFloat64), 16, 16).abs().sum().item<double>(), 0);
}

TEST(Dropout, DroppingAnElementEqualsRenderingTheRest) {
  std::mt19937_64 rng(7);
  auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 4));
  auto p = torch::softmax(torch::randn({4, 6}, torch::kFloat64), 1);
  DropoutMask m;
  m.bits = {1, 0, 1, 1};
  m.keep_probability = 0.5;
  auto keep = torch::tensor({0, 2, 3}, torch::kLong);
  auto expected = compose_layout_image(p.index_select(0, keep), g.index_select(0, keep), 16, 16);
  EXPECT_TRUE(torch::allclose(compose_dropout_image(p, g, m, 16, 16), expected, 0, 0));
}

TEST(Dropout, SubsetMaskNeverBrightens) {
  std::mt19937_64 rng(8);
  auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 6));
  auto p = torch::softmax(torch::randn({6, 6}, torch::kFloat64), 1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto m = sample_dropout_mask(6, 0.7, s).as_tensor(torch::kFloat64);
    auto sub = m * sample_dropout_mask(6, 0.5, s + 100).as_tensor(torch::kFloat64);
    auto a = compose_dropout_image(p, g, m, 16, 16);
    auto b = compose_dropout_image(p, g, sub, 16, 16);
    EXPECT_TRUE((b <= a).all().item<bool>());
  }
}

namespace {

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

Layout three_elements() {
  return layout_of({element(kLogo, 0.2, 0.1, 0.2, 0.1), element(kProductImage, 0.5, 0.45, 0.5, 0.5),
                    element(kHeadline, 0.5, 0.85, 0.8, 0.1)});
}

}  // namespace

TEST(Svg, OneRectPerElement) {
  auto svg = export_svg(three_elements());
  EXPECT_EQ(count(svg, "<rect"), 3);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
}

TEST(Svg, DefaultPaletteFillsEmptyStyle) {
  StyleConfig style;
  auto svg = export_svg(three_elements(), style);
  for (const char* cls : {"logo", "product_image", "headline"})
    EXPECT_NE(svg.find(default_palette().at(cls)), std::string::npos) << cls;
}

TEST(Svg, CustomPaletteOverridesOneClass) {
  StyleConfig style;
  style.palette["logo"] = "#123456";
  auto svg = export_svg(three_elements(), style);
  EXPECT_NE(svg.find("#123456"), std::string::npos);
  EXPECT_NE(svg.find(default_palette().at("headline")), std::string::npos);
}

TEST(Svg, Deterministic) {
  EXPECT_EQ(export_svg(three_elements()), export_svg(three_elements()));
}

TEST(Svg, ShowsOrdersWhenAsked) {
  auto l = three_elements();
  for (int i = 0; i < 3; ++i) l.elements[i].order = i;
  StyleConfig style;
  style.show_orders = true;
  auto with = export_svg(l, style);
  style.show_orders = false;
  EXPECT_GT(with.size(), export_svg(l, style).size());
}

TEST(Svg, RejectsInvalidLayout) {
  auto l = three_elements();
  l.elements[0].class_probs = {0.5, 0, 0, 0, 0, 0};
  EXPECT_THROW(export_svg(l), ValidationError);
}
