// layoutforge command-line tool.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "layoutforge/data.hpp"
#include "layoutforge/metrics.hpp"
#include "layoutforge/pipeline.hpp"
#include "layoutforge/render.hpp"
#include "layoutforge/service.hpp"
#include "layoutforge/training.hpp"

namespace fs = std::filesystem;
using namespace layoutforge;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("", path.string() + ": " + e.what());
  }
}

struct TrainOptions {
  TrainingConfig config;
  std::string aspect = "square";
  std::string corpus;
  int corpus_size = 2000;
  int image_size = 64;
  std::string frozen = "product_image";
  std::string out = "model.lfckpt";
  std::string log;
};

struct SynthOptions {
  int size = 2000;
  std::string aspect = "square";
  std::uint64_t seed = 1;
  bool annotate_orders = true;
  std::string out = "corpus.json";
};

struct GenerateOptions {
  std::string checkpoint;
  std::string request;
  std::optional<int> k;
  std::optional<int> grid_n;
  std::optional<std::uint64_t> seed;
  std::string rank_order;
  std::string out = "candidates";
};

struct RetargetOptions {
  std::string checkpoint;
  std::string layout;
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  std::string out = "retarget";
};

struct EvaluateOptions {
  std::string corpus;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::string out;
};

struct PlotOptions {
  std::string candidates;
  std::uint64_t seed = 0;
  std::string out = "clusters.svg";
};

struct ServeOptions {
  std::vector<std::string> checkpoints;
  std::string adjust;
  std::string home;
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 1;
};

std::vector<int> parse_class_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty() || name == "none") continue;
    out.push_back(ClassRegistry::defaults().id(name));
  }
  return out;
}

int run_train(TrainOptions& o) {
  auto& c = o.config;
  c.aspect_class = aspect_class_from_string(o.aspect);
  c.frozen_classes = parse_class_list(o.frozen);
  c.discriminator.image_width = c.discriminator.image_height = o.image_size;
  std::vector<Layout> corpus;
  if (!o.corpus.empty()) {
    corpus = load_corpus(o.corpus);
  } else {
    CorpusConfig cc;
    cc.size = o.corpus_size;
    cc.seed = c.seed + 1;
    cc.aspect_mix = {{c.aspect_class, 1.0}};
    corpus = generate_synthetic_corpus(cc);
  }
  for (auto& l : corpus) l = annotate(std::move(l));

  std::ofstream log;
  if (!o.log.empty()) {
    if (fs::path(o.log).has_parent_path()) fs::create_directories(fs::path(o.log).parent_path());
    log.open(o.log);
    log << loss_report_csv_header() << "\n";
  }
  nlohmann::json evals = nlohmann::json::array();
  const auto start = std::chrono::steady_clock::now();
  auto result = train(c, corpus, [&](const LossReport& r, const std::optional<EvalRecord>& e) {
    if (log.is_open()) log << to_csv_row(r) << "\n";
    if (e) {
      evals.push_back(*e);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::fprintf(stderr, "step %lld  overlap %.4f  alignment %.4f  area diff %.3f  (%.0fs)\n",
                   static_cast<long long>(e->step), e->overlap_index, e->alignment_index, e->mean_area_difference,
                   secs);
    }
  });
  result.checkpoint.save(o.out);
  if (!o.log.empty()) write_text(fs::path(o.log).replace_extension(".eval.json"), evals.dump(2) + "\n");
  std::printf("wrote %s (%lld steps)\n", o.out.c_str(), static_cast<long long>(result.checkpoint.step));
  return 0;
}

int run_synth(const SynthOptions& o) {
  CorpusConfig cc;
  cc.size = o.size;
  cc.seed = o.seed;
  cc.aspect_mix = {{aspect_class_from_string(o.aspect), 1.0}};
  auto corpus = generate_synthetic_corpus(cc);
  if (o.annotate_orders)
    for (auto& l : corpus) l = annotate(std::move(l));
  save_corpus(o.out, corpus);
  std::printf("wrote %zu layouts to %s\n", corpus.size(), o.out.c_str());
  return 0;
}

int run_generate(const GenerateOptions& o) {
  auto checkpoint = ModelCheckpoint::load(o.checkpoint);
  auto request = design_request_from_json(read_json(o.request));
  if (o.k) request.k = *o.k;
  if (o.grid_n) request.grid_n = *o.grid_n;
  if (o.seed) request.seed = *o.seed;
  if (!o.rank_order.empty()) request.order = rank_order_from_string(o.rank_order);
  auto set = run_design_pipeline(request, checkpoint);
  const fs::path out(o.out);
  fs::create_directories(out);
  write_text(out / "candidates.json", candidate_set_to_json(set).dump(2) + "\n");
  for (size_t i = 0; i < set.candidates.size(); ++i)
    write_text(out / ("layout_" + std::to_string(i) + ".svg"), export_svg(set.candidates[i].layout));
  std::printf("%zu candidates in %d clusters; recommended:", set.candidates.size(), set.k);
  for (int r : set.recommended) std::printf(" %d", r);
  std::printf("\nwrote %s\n", (out / "candidates.json").c_str());
  return 0;
}

int run_retarget(const RetargetOptions& o) {
  auto checkpoint = ModelCheckpoint::load(o.checkpoint);
  auto source = load_layout(o.layout);
  auto target = Canvas::from_size(o.width, o.height);
  auto result = retarget_layout(source, target, checkpoint, o.seed);
  const fs::path out(o.out);
  fs::create_directories(out);
  save_layout(out / "layout.json", result);
  StyleConfig style;
  style.show_orders = true;
  write_text(out / "layout.svg", export_svg(result, style));
  std::printf("retargeted to %dx%d (%s); order retention %.2f\nwrote %s\n", target.width_px, target.height_px,
              std::string(to_string(target.aspect_class)).c_str(), order_retention(result),
              (out / "layout.json").c_str());
  return 0;
}

int run_evaluate(const EvaluateOptions& o) {
  auto corpus = load_corpus(o.corpus);
  for (auto& l : corpus) {
    bool ordered = true;
    for (const auto& e : l.elements) ordered = ordered && e.order.has_value();
    if (!ordered) l = annotate(std::move(l));
  }
  MetricOptions options;
  options.orders = true;
  std::vector<std::pair<std::string, MetricReport>> rows;
  options.area = false;
  rows.emplace_back("corpus", evaluate_layouts(corpus, options));
  nlohmann::json doc{{"corpus", to_json(rows.back().second)}};
  if (!o.checkpoint.empty()) {
    auto checkpoint = ModelCheckpoint::load(o.checkpoint);
    std::vector<int> frozen;
    if (checkpoint.training_config.contains("frozen_classes"))
      frozen = checkpoint.training_config["frozen_classes"].get<std::vector<int>>();
    ConditioningOptions cond{checkpoint.order_conditioning, frozen};
    auto generated = generate_from_conditions(checkpoint.generator, corpus, cond, o.seed,
                                              checkpoint.generator_config.num_classes);
    options.area = true;
    rows.emplace_back("generated", evaluate_layouts(generated, options));
    doc["generated"] = to_json(rows.back().second);
  }
  std::cout << format_metric_table(rows);
  for (const auto& [name, report] : rows) {
    if (report.area_difference.empty()) continue;
    std::cout << "\nrelative area difference (" << name << ")\n";
    for (const auto& [cls, st] : report.area_difference)
      std::printf("  %-14s mean %.3f  std %.3f  n=%d\n", ClassRegistry::defaults().name(cls).c_str(), st.mean,
                  st.stddev, st.count);
  }
  if (!o.out.empty()) write_text(o.out, doc.dump(2) + "\n");
  return 0;
}

int run_plot(const PlotOptions& o) {
  const auto doc = read_json(o.candidates);
  std::vector<std::vector<double>> features;
  std::vector<int> clusters;
  for (const auto& c : doc.at("candidates")) {
    features.push_back(c.at("features").get<std::vector<double>>());
    clusters.push_back(c.at("cluster").get<int>());
  }
  auto coords = tsne_embed(features, o.seed);
  write_text(o.out, cluster_plot_svg(coords, clusters, doc.value("recommended", std::vector<int>{})));
  std::printf("wrote %s\n", o.out.c_str());
  return 0;
}

int run_serve(const ServeOptions& o) {
  ServiceConfig config;
  config.home = o.home.empty() ? ServiceConfig::default_home() : fs::path(o.home);
  config.workers = o.workers;
  for (const auto& spec : o.checkpoints) {
    // aspect=path, or a bare path whose aspect is read from the checkpoint
    const auto eq = spec.find('=');
    if (eq != std::string::npos) {
      config.checkpoints[aspect_class_from_string(spec.substr(0, eq))] = spec.substr(eq + 1);
    } else {
      config.checkpoints[ModelCheckpoint::load(spec).aspect_class] = spec;
    }
  }
  if (!o.adjust.empty()) config.adjust_checkpoint = o.adjust;
  Service service(config);
  std::printf("serving on http://%s:%d (data in %s)\n", o.host.c_str(), o.port, config.home.c_str());
  std::fflush(stdout);
  service.listen(o.host, o.port);
  return 0;
}

/// Reads a key = value (INI/TOML) file and files top-level keys under the
/// subcommand being run, so a config file need not repeat the section name.
class SubcommandConfig : public CLI::ConfigTOML {
 public:
  explicit SubcommandConfig(std::string section) : section_(std::move(section)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigTOML::from_config(input);
    if (section_.empty()) return items;
    for (auto& item : items)
      if (item.parents.empty() || item.parents.front() != section_) item.parents.insert(item.parents.begin(), section_);
    return items;
  }

 private:
  std::string section_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-conditioned layout generation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file for the subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<SubcommandConfig>(argc > 1 && argv[1][0] != '-' ? argv[1] : ""));

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Train a layout model");
  auto& tc = train_o.config;
  train_cmd->add_option("--corpus", train_o.corpus, "Corpus JSON (default: synthesize one)");
  train_cmd->add_option("--corpus-size,--corpus_size", train_o.corpus_size, "Synthetic corpus size");
  train_cmd->add_option("--aspect,--aspect_class", train_o.aspect, "portrait, square or landscape");
  train_cmd->add_option("--seed", tc.seed, "Random seed");
  train_cmd->add_option("--steps", tc.steps, "Training steps");
  train_cmd->add_option("--batch-size,--batch_size", tc.batch_size, "Batch size");
  train_cmd->add_option("--learning-rate,--learning_rate", tc.learning_rate, "Adam learning rate");
  train_cmd->add_option("--beta1", tc.beta1);
  train_cmd->add_option("--beta2", tc.beta2);
  train_cmd->add_option("--dropout-b,--dropout_b", tc.dropout_b, "Element keep probability");
  train_cmd->add_option("--local-branch,--local_branch", tc.local_branch, "Use the dropout branch");
  train_cmd->add_option("--alpha", tc.alpha, "Allowed relative area difference");
  train_cmd->add_option("--w-adv,--w_adv", tc.weights.w_adv);
  train_cmd->add_option("--w-area,--w_area", tc.weights.w_area);
  train_cmd->add_option("--w-over,--w_over", tc.weights.w_over);
  train_cmd->add_option("--w-alg,--w_alg", tc.weights.w_alg);
  train_cmd->add_option("--w-ord,--w_ord", tc.weights.w_ord);
  train_cmd->add_option("--w-r,--w_r", tc.weights.w_r);
  train_cmd->add_option("--order-conditioning,--order_conditioning", tc.order_conditioning,
                        "Train the order-conditioned adjustment model");
  train_cmd->add_option("--frozen", train_o.frozen, "Comma-separated classes given as fixed geometry");
  train_cmd->add_option("--image-size,--image_size", train_o.image_size, "Square render size");
  train_cmd->add_option("--conv-channels,--conv_channels", tc.discriminator.conv_channels)->delimiter(',');
  train_cmd->add_option("--embed-dim,--embed_dim", tc.generator.embed_dim);
  train_cmd->add_option("--relation-blocks,--relation_blocks", tc.generator.relation_blocks);
  train_cmd->add_option("--heads", tc.generator.heads);
  train_cmd->add_option("--decoder-hidden,--decoder_hidden", tc.generator.decoder_hidden)->delimiter(',');
  train_cmd->add_option("--layer-norm,--layer_norm", tc.generator.layer_norm);
  train_cmd->add_option("--holdout-fraction,--holdout_fraction", tc.holdout_fraction);
  train_cmd->add_option("--eval-every,--eval_every", tc.eval_every);
  train_cmd->add_option("--eval-samples,--eval_samples", tc.eval_samples);
  train_cmd->add_option("--checkpoint-every,--checkpoint_every", tc.checkpoint_every);
  train_cmd->add_option("--checkpoint-dir,--checkpoint_dir", tc.checkpoint_dir);
  train_cmd->add_option("--log", train_o.log, "CSV loss log (evaluations go next to it as JSON)");
  train_cmd->add_option("--out", train_o.out, "Checkpoint path");

  SynthOptions synth_o;
  auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic corpus");
  synth_cmd->add_option("--size", synth_o.size);
  synth_cmd->add_option("--aspect", synth_o.aspect);
  synth_cmd->add_option("--seed", synth_o.seed);
  synth_cmd->add_option("--orders", synth_o.annotate_orders, "Store reading orders");
  synth_cmd->add_option("--out", synth_o.out);

  GenerateOptions gen_o;
  auto* gen_cmd = app.add_subcommand("generate", "Generate, cluster and rank candidate layouts");
  gen_cmd->add_option("--checkpoint", gen_o.checkpoint)->required();
  gen_cmd->add_option("--request,--specs", gen_o.request, "Request JSON: canvas + element specs")->required();
  gen_cmd->add_option("--k", gen_o.k, "Number of clusters");
  gen_cmd->add_option("--grid-n", gen_o.grid_n, "Image locations per axis");
  gen_cmd->add_option("--seed", gen_o.seed);
  gen_cmd->add_option("--rank-order", gen_o.rank_order, "asc or desc")->check(CLI::IsMember({"asc", "desc"}));
  gen_cmd->add_option("--out", gen_o.out, "Output directory");

  RetargetOptions rt_o;
  auto* rt_cmd = app.add_subcommand("retarget", "Adapt a layout to a new canvas size");
  rt_cmd->add_option("--checkpoint", rt_o.checkpoint, "Adjustment checkpoint")->required();
  rt_cmd->add_option("--layout", rt_o.layout)->required();
  rt_cmd->add_option("--width", rt_o.width)->required();
  rt_cmd->add_option("--height", rt_o.height)->required();
  rt_cmd->add_option("--seed", rt_o.seed);
  rt_cmd->add_option("--out", rt_o.out, "Output directory");

  EvaluateOptions ev_o;
  auto* ev_cmd = app.add_subcommand("evaluate", "Print overlap, alignment and symmetry metrics");
  ev_cmd->add_option("--corpus", ev_o.corpus)->required();
  ev_cmd->add_option("--checkpoint", ev_o.checkpoint, "Also evaluate layouts generated from the corpus conditions");
  ev_cmd->add_option("--seed", ev_o.seed);
  ev_cmd->add_option("--out", ev_o.out, "MetricReport JSON");

  PlotOptions plot_o;
  auto* plot_cmd = app.add_subcommand("cluster-plot", "t-SNE scatter of a candidate set");
  plot_cmd->add_option("--candidates", plot_o.candidates)->required();
  plot_cmd->add_option("--seed", plot_o.seed);
  plot_cmd->add_option("--out", plot_o.out);

  ServeOptions serve_o;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP job service");
  serve_cmd->add_option("--checkpoint", serve_o.checkpoints, "[aspect=]path, repeatable");
  serve_cmd->add_option("--adjust-checkpoint", serve_o.adjust);
  serve_cmd->add_option("--home", serve_o.home, "Storage root (default $LAYOUTFORGE_HOME)");
  serve_cmd->add_option("--host", serve_o.host);
  serve_cmd->add_option("--port", serve_o.port);
  serve_cmd->add_option("--workers", serve_o.workers);

  for (auto* sub : {train_cmd, synth_cmd, gen_cmd, rt_cmd, ev_cmd, plot_cmd, serve_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return run_train(train_o);
    if (*synth_cmd) return run_synth(synth_o);
    if (*gen_cmd) return run_generate(gen_o);
    if (*rt_cmd) return run_retarget(rt_o);
    if (*ev_cmd) return run_evaluate(ev_o);
    if (*plot_cmd) return run_plot(plot_o);
    if (*serve_cmd) return run_serve(serve_o);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s%s%s\n", e.path().empty() ? "" : e.path().c_str(), e.path().empty() ? "" : ": ",
                 e.message().c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
