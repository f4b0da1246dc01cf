// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
//
// LAYOUTFORGE_ACCEPTANCE_STEPS overrides the training steps per model
// (default 2000); LAYOUTFORGE_ACCEPTANCE_OUT names the directory for the
// trained checkpoints and the JSON summary (default ./acceptance_out).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <string>

#include "layoutforge/batch.hpp"
#include "layoutforge/data.hpp"
#include "layoutforge/losses.hpp"
#include "layoutforge/metrics.hpp"
#include "layoutforge/pipeline.hpp"
#include "layoutforge/render.hpp"
#include "layoutforge/training.hpp"
#include "fixtures.hpp"
#include "kinks.hpp"
#include "oracles.hpp"

using namespace layoutforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

nlohmann::json summary = nlohmann::json::object();
int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  summary["criteria"][std::to_string(id)] = {{"pass", pass}, {"detail", detail}};
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::atoi(v) : fallback;
}

torch::Tensor t64(const std::vector<double>& v) { return torch::tensor(v, torch::kFloat64); }

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  constexpr int kCases = 100;
  std::mt19937_64 rng(101);
  nlohmann::json worst;

  double area = 0;
  std::uniform_real_distribution<double> u(0.02, 0.4), ratio(0.3, 1.9);
  for (int k = 0; k < kCases; ++k) {
    std::vector<double> tgt(5), pred(5);
    for (int i = 0; i < 5; ++i) {
      tgt[i] = u(rng);
      double r;
      do r = ratio(rng);
      while (std::abs(std::abs(r - 1) - 0.3) < 0.02);
      pred[i] = tgt[i] * r;
    }
    auto target = t64(tgt);
    area = std::max(area, lf_test::fd_relative_error(
                              [&](const torch::Tensor& s) { return margin_area_loss(s, target, 0.3); }, t64(pred)));
  }
  worst["area"] = area;

  double over = 0;
  for (int k = 0; k < kCases;) {
    auto boxes = lf_test::random_boxes(rng, 4);
    if (!lf_test::overlap_is_smooth(boxes, 1e-3)) continue;
    ++k;
    over = std::max(over, lf_test::fd_relative_error([](const torch::Tensor& x) { return overlap_loss(x); },
                                                         lf_test::to_tensor(boxes)));
  }
  worst["overlap"] = over;

  double alg = 0;
  for (int k = 0; k < kCases;) {
    auto boxes = lf_test::random_boxes(rng, 4);
    if (!lf_test::alignment_minimum_is_unique(boxes, 1e-3)) continue;
    ++k;
    alg = std::max(alg, lf_test::fd_relative_error([](const torch::Tensor& x) { return alignment_loss(x); },
                                                       lf_test::to_tensor(boxes)));
  }
  worst["alignment"] = alg;

  double ord = 0;
  for (int k = 0; k < kCases;) {
    auto boxes = lf_test::random_boxes(rng, 5);
    if (!lf_test::distances_are_distinct(boxes, 1e-3)) continue;
    ++k;
    auto g = lf_test::to_tensor(boxes);
    auto orders = torch::randperm(5, torch::kLong);
    ord = std::max(ord, lf_test::fd_relative_error(
                            [&](const torch::Tensor& x) { return order_loss(orders, origin_distance(x)); }, g));
  }
  worst["order"] = ord;

  double render = 0;
  const int W = 16, H = 16;
  for (int k = 0; k < kCases;) {
    auto g = lf_test::to_tensor(lf_test::random_boxes(rng, 2));
    auto p = torch::softmax(torch::randn({2, 6}, torch::kFloat64), 1);
    if (!lf_test::off_kinks(g, p, W, H, 0.02)) continue;
    ++k;
    auto weights = torch::rand({6, H, W}, torch::kFloat64);
    render = std::max(render, lf_test::fd_relative_error(
                                  [&](const torch::Tensor& x) { return (compose_layout_image(p, x, W, H) * weights).sum(); },
                                  g));
  }
  worst["renderer"] = render;

  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 60.0;
  std::string detail;
  for (auto& [name, v] : worst.items()) {
    ok = ok && v.get<double>() < 1e-3;
    detail += name + " " + fmt("%.2e", v.get<double>()) + ", ";
  }
  detail += "max rel err < 1e-3 required; " + fmt("%.1f s", elapsed) + " (< 60 s)";
  summary["gradient_errors"] = worst;
  verdict(1, ok, detail);
}

void loss_oracles(const std::vector<Layout>& corpus) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst_mc = 0;
  for (int k = 0; k < 50; ++k) {
    auto [a, b] = lf_test::overlapping_pair(rng);
    const double analytic = overlap_loss(std::vector<Geometry>{a, b});
    const double mc = lf_test::monte_carlo_pair_overlap(a, b, 1'000'000, 1000 + k);
    worst_mc = std::max(worst_mc, std::abs(analytic - mc) / analytic);
  }

  int order_mismatch = 0;
  std::uniform_real_distribution<double> ud(0.0, 1.5);
  for (int k = 0; k < 1000; ++k) {
    const int n = 2 + k % 5;
    std::vector<int> orders(n);
    std::iota(orders.begin(), orders.end(), 0);
    std::shuffle(orders.begin(), orders.end(), rng);
    std::vector<double> d(n);
    for (auto& x : d) x = ud(rng);
    if (order_loss(orders, d) != lf_test::brute_force_order_loss(orders, d)) ++order_mismatch;
  }

  double max_alignment = 0;
  for (const auto& l : corpus) {
    std::vector<Geometry> g;
    for (const auto& e : l.elements) g.push_back(e.geometry);
    max_alignment = std::max(max_alignment, alignment_loss(g));
  }
  const double elapsed = seconds_since(t0);
  const bool ok = worst_mc < 0.02 && order_mismatch == 0 && max_alignment == 0.0 && elapsed < 120.0;
  verdict(2, ok,
          "overlap vs Monte Carlo worst " + fmt("%.3f%%", 100 * worst_mc) + " (< 2%), order mismatches " +
              std::to_string(order_mismatch) + "/1000, max corpus alignment " + fmt("%g", max_alignment) + ", " +
              fmt("%.1f s", elapsed) + " (< 120 s)");
}

void dropout_statistics() {
  auto m = sample_dropout_mask(10000, 0.5, 303);
  double kept = 0;
  for (auto b : m.bits) kept += b;
  const double rate = kept / m.bits.size();
  verdict(8, rate >= 0.485 && rate <= 0.515, "keep rate " + fmt("%.4f", rate) + " over 10^4 draws, band [0.485, 0.515]");
}

// ---------------------------------------------------------------------------

TrainingConfig desk_config(int steps) {
  TrainingConfig tc;
  tc.discriminator.image_width = tc.discriminator.image_height = 32;
  tc.discriminator.conv_channels = {16, 32, 64};
  tc.generator.embed_dim = 64;
  tc.generator.decoder_hidden = {64};
  tc.batch_size = 32;
  tc.learning_rate = 1e-4;
  tc.steps = steps;
  tc.seed = 7;
  tc.eval_every = std::max(1, steps / 5);
  tc.eval_samples = 200;
  return tc;
}

ModelCheckpoint train_variant(const std::string& name, const TrainingConfig& tc, const std::vector<Layout>& corpus,
                              const fs::path& out) {
  const auto t0 = Clock::now();
  std::printf("training %s: dropout branch %s, w_over %g, w_alg %g, w_ord %g, order conditioning %s\n", name.c_str(),
              tc.local_branch ? "on" : "off", tc.weights.w_over, tc.weights.w_alg, tc.weights.w_ord,
              tc.order_conditioning ? "on" : "off");
  std::fflush(stdout);
  auto result = train(tc, corpus, [](const LossReport&, const std::optional<EvalRecord>& e) {
    if (e)
      std::printf("  step %5lld  overlap %.4f  alignment %.4f  area diff %.4f\n", static_cast<long long>(e->step),
                  e->overlap_index, e->alignment_index, e->mean_area_difference);
    std::fflush(stdout);
  });
  std::printf("  %s trained in %.0f s\n", name.c_str(), seconds_since(t0));
  result.checkpoint.save(out / (name + ".lfckpt"));
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& e : result.evaluations) evals.push_back(e);
  summary["training"][name] = evals;
  return std::move(result.checkpoint);
}

std::vector<Layout> generate_held_out(const ModelCheckpoint& ck, const std::vector<Layout>& held_out,
                                      const ConditioningOptions& options) {
  Generator g = ck.generator;
  return generate_from_conditions(g, held_out, options, 404, ck.generator_config.num_classes);
}

void aspect_ratio_exactness(const ModelCheckpoint& ck, const std::vector<Layout>& corpus) {
  Generator g = ck.generator;
  const ConditioningOptions options{false, {kProductImage}};
  double worst = 0;
  long long checked = 0, generated = 0;
  for (int round = 0; generated < 10000; ++round) {
    auto out = generate_from_conditions(g, corpus, options, mix_seed(505, round), ck.generator_config.num_classes);
    for (const auto& l : out) {
      if (generated++ >= 10000) break;
      for (const auto& e : l.elements) {
        if (!(e.attributes.r > 0.0)) continue;
        ++checked;
        worst = std::max(worst, std::abs(e.geometry.h / e.geometry.w - e.attributes.r));
      }
    }
  }
  verdict(3, worst < 1e-6,
          "max |h/w - r| " + fmt("%.2e", worst) + " over " + std::to_string(checked) +
              " elements with r > 0 in 10^4 layouts (< 1e-6)");
}

}  // namespace

int main() {
  const int steps = env_int("LAYOUTFORGE_ACCEPTANCE_STEPS", 2000);
  const char* out_env = std::getenv("LAYOUTFORGE_ACCEPTANCE_OUT");
  const fs::path out = out_env && *out_env ? fs::path(out_env) : fs::path("acceptance_out");
  fs::create_directories(out);
  torch::set_num_threads(1);
  summary["steps"] = steps;

  CorpusConfig cc;
  cc.size = 2000;
  cc.seed = 7;
  auto corpus = generate_synthetic_corpus(cc);
  for (auto& l : corpus) l = annotate(std::move(l));
  const double corpus_symmetry = mean_symmetry(corpus);
  std::printf("corpus: %zu square layouts, overlap %.3g, alignment %.3g, symmetry %.4f\n", corpus.size(),
              overlap_index(corpus), alignment_index(corpus), corpus_symmetry);

  gradient_correctness();
  loss_oracles(corpus);
  dropout_statistics();

  // Ablation variants share everything except the dropout branch and the
  // hand-crafted loss weights.
  auto variant = [&](bool dropout, double w_over, double w_alg) {
    auto tc = desk_config(steps);
    tc.local_branch = dropout;
    tc.weights.w_over = w_over;
    tc.weights.w_alg = w_alg;
    return tc;
  };
  const LossWeights defaults;
  auto a = train_variant("A_plain", variant(false, 0, 0), corpus, out);
  auto b = train_variant("B_dropout", variant(true, 0, 0), corpus, out);
  auto c = train_variant("C_dropout_overlap", variant(true, defaults.w_over, 0), corpus, out);
  auto e = train_variant("E_dropout_overlap_alignment", variant(true, defaults.w_over, defaults.w_alg), corpus, out);

  const auto held_out = split_corpus(corpus, desk_config(steps).holdout_fraction, desk_config(steps).seed).second;
  const ConditioningOptions layout_options{false, {kProductImage}};
  nlohmann::json metrics;
  std::map<std::string, std::vector<Layout>> generated;
  for (const auto& [name, ck] : {std::pair<std::string, const ModelCheckpoint*>{"A", &a}, {"B", &b}, {"C", &c}, {"E", &e}}) {
    generated[name] = generate_held_out(*ck, held_out, layout_options);
    const auto& g = generated[name];
    metrics[name] = {{"overlap_index", overlap_index(g)},
                     {"alignment_index", alignment_index(g)},
                     {"symmetry", mean_symmetry(g)}};
    std::printf("variant %s on %zu held-out conditions: overlap %.4f  alignment %.4f  symmetry %.4f\n", name.c_str(),
                g.size(), metrics[name]["overlap_index"].get<double>(), metrics[name]["alignment_index"].get<double>(),
                metrics[name]["symmetry"].get<double>());
  }
  summary["ablation"] = metrics;

  aspect_ratio_exactness(e, corpus);

  {
    const double ov_a = metrics["A"]["overlap_index"], ov_b = metrics["B"]["overlap_index"];
    const double ov_c = metrics["C"]["overlap_index"];
    const double al_c = metrics["C"]["alignment_index"], al_e = metrics["E"]["alignment_index"];
    const bool dropout_helps = ov_b < ov_a, overlap_halves = ov_c <= 0.5 * ov_b, alignment_helps = al_e < al_c;
    verdict(4, dropout_helps && overlap_halves && alignment_helps,
            "overlap A " + fmt("%.4f", ov_a) + " > B " + fmt("%.4f", ov_b) + " [" + (dropout_helps ? "ok" : "no") +
                "]; C " + fmt("%.4f", ov_c) + " <= 0.5 B [" + (overlap_halves ? "ok" : "no") + "]; alignment E " +
                fmt("%.4f", al_e) + " < C " + fmt("%.4f", al_c) + " [" + (alignment_helps ? "ok" : "no") + "]");
  }

  {
    bool ok = true;
    std::string detail;
    for (const auto& [cls, st] : area_difference_stats(generated["E"])) {
      ok = ok && st.mean <= 0.3;
      detail += ClassRegistry::defaults().name(cls) + " " + fmt("%.3f", st.mean) + ", ";
    }
    verdict(5, ok, "mean relative area difference per class (<= 0.3): " + detail.substr(0, detail.size() - 2));
  }

  {
    auto adjust = [&](double w_ord) {
      auto tc = desk_config(steps);
      tc.order_conditioning = true;
      tc.frozen_classes = {};
      tc.weights.w_ord = w_ord;
      return tc;
    };
    auto with_order = train_variant("adjust_with_order", adjust(defaults.w_ord), corpus, out);
    auto without_order = train_variant("adjust_without_order", adjust(0.0), corpus, out);
    const ConditioningOptions options{true, {}};
    const std::vector<double> thresholds{0.8};
    const double with_r = order_retention_curve(generate_held_out(with_order, held_out, options), thresholds)[0];
    const double without_r = order_retention_curve(generate_held_out(without_order, held_out, options), thresholds)[0];
    summary["retention_at_0.8"] = {{"with_order_loss", with_r}, {"without_order_loss", without_r}};
    verdict(6, with_r > without_r,
            "retention at 0.8: with order loss " + fmt("%.4f", with_r) + " > without " + fmt("%.4f", without_r));
  }

  {
    const double sym_b = metrics["B"]["symmetry"], sym_e = metrics["E"]["symmetry"];
    const double gap_b = std::abs(sym_b - corpus_symmetry), gap_e = std::abs(sym_e - corpus_symmetry);
    verdict(7, gap_e < gap_b,
            "symmetry without losses " + fmt("%.4f", sym_b) + ", with losses " + fmt("%.4f", sym_e) + ", corpus " +
                fmt("%.4f", corpus_symmetry) + " (distance " + fmt("%.4f", gap_b) + " -> " + fmt("%.4f", gap_e) + ")");
  }

  DesignRequest request;
  request.canvas = default_canvas(AspectClass::square);
  request.elements = {{kProductImage, {0.16, 1.0, 0.5}, std::nullopt},
                      {kHeadline, {0.06, 0.25, 0.2}, std::nullopt},
                      {kButton, {0.02, 0.4, 0.9}, std::nullopt}};
  request.seed = 909;
  {
    const auto first = candidate_set_to_json(run_design_pipeline(request, e)).dump();
    const auto second = candidate_set_to_json(run_design_pipeline(request, e)).dump();
    verdict(9, first == second,
            "two pipeline runs with seed 909 (" + std::to_string(request.grid_n * request.grid_n) +
                " candidates, k = " + std::to_string(request.k) + "): " + std::to_string(first.size()) +
                " bytes, " + (first == second ? "identical" : "different"));
  }

  {
    std::vector<ImageLocation> one{{0.5, 0.5}};
    generate_candidates(request.elements, request.canvas, e, one, 0);  // warm-up
    constexpr int kRuns = 20;
    double worst = 0, total = 0;
    for (int i = 0; i < kRuns; ++i) {
      const auto t0 = Clock::now();
      generate_candidates(request.elements, request.canvas, e, one, i);
      const double s = seconds_since(t0);
      worst = std::max(worst, s);
      total += s;
    }
    verdict(10, total / kRuns < 1.0,
            "single-layout inference mean " + fmt("%.4f s", total / kRuns) + ", max " + fmt("%.4f s", worst) +
                " over 20 runs (< 1.0 s)");
  }

  std::ofstream(out / "summary.json") << summary.dump(2) << "\n";
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
