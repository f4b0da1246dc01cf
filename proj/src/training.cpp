#include "layoutforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "layoutforge/data.hpp"
#include "layoutforge/metrics.hpp"
#include "layoutforge/render.hpp"

namespace layoutforge {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("Adam betas must lie in [0,1)");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (steps < 0) throw ValidationError("steps must be >= 0");
  if (!(dropout_b >= 0.0 && dropout_b <= 1.0)) throw ValidationError("dropout_b must lie in [0,1]");
  if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ValidationError("holdout_fraction must lie in [0,1)");
  if (eval_every < 0 || checkpoint_every < 0 || eval_samples < 1)
    throw ValidationError("eval/checkpoint intervals must be non-negative");
  if (checkpoint_every > 0 && checkpoint_dir.empty())
    throw ValidationError("checkpoint_every requires checkpoint_dir");
  weights.validate();
  generator.validate();
  effective_discriminator().validate();
  if (generator.num_classes != discriminator.num_classes)
    throw ValidationError("generator and discriminator class counts differ");
  for (int c : frozen_classes) {
    if (c < 0 || c >= generator.num_classes)
      throw ValidationError("frozen class id " + std::to_string(c) + " is out of range");
  }
}

DiscriminatorConfig TrainingConfig::effective_discriminator() const {
  DiscriminatorConfig d = discriminator;
  d.dropout_b = dropout_b;
  d.local_branch = local_branch;
  return d;
}

LossWeights TrainingConfig::effective_weights() const {
  LossWeights w = weights;
  if (!order_conditioning) w.w_ord = 0.0;
  return w;
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"batch_size", c.batch_size},
                     {"steps", c.steps},
                     {"dropout_b", c.dropout_b},
                     {"local_branch", c.local_branch},
                     {"weights", c.weights},
                     {"alpha", c.alpha},
                     {"seed", c.seed},
                     {"aspect_class", std::string(to_string(c.aspect_class))},
                     {"order_conditioning", c.order_conditioning},
                     {"frozen_classes", c.frozen_classes},
                     {"holdout_fraction", c.holdout_fraction},
                     {"eval_every", c.eval_every},
                     {"eval_samples", c.eval_samples},
                     {"checkpoint_every", c.checkpoint_every},
                     {"checkpoint_dir", c.checkpoint_dir},
                     {"generator", c.generator},
                     {"discriminator", c.discriminator}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  TrainingConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.steps = j.value("steps", d.steps);
  c.dropout_b = j.value("dropout_b", d.dropout_b);
  c.local_branch = j.value("local_branch", d.local_branch);
  c.weights = j.value("weights", d.weights);
  c.alpha = j.value("alpha", d.alpha);
  c.seed = j.value("seed", d.seed);
  c.aspect_class = aspect_class_from_string(j.value("aspect_class", std::string(to_string(d.aspect_class))));
  c.order_conditioning = j.value("order_conditioning", d.order_conditioning);
  c.frozen_classes = j.value("frozen_classes", d.frozen_classes);
  c.holdout_fraction = j.value("holdout_fraction", d.holdout_fraction);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_samples = j.value("eval_samples", d.eval_samples);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.checkpoint_dir = j.value("checkpoint_dir", d.checkpoint_dir);
  c.generator = j.value("generator", d.generator);
  c.discriminator = j.value("discriminator", d.discriminator);
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"step", r.step},
                     {"d_total", r.d_total},
                     {"d_adversarial", r.d_adversarial},
                     {"d_reconstruction", r.d_reconstruction},
                     {"g_total", r.g_total},
                     {"g_adversarial", r.g_adversarial},
                     {"g_area", r.g_area},
                     {"g_overlap", r.g_overlap},
                     {"g_alignment", r.g_alignment},
                     {"g_order", r.g_order}};
}

std::string loss_report_csv_header() {
  return "step,d_total,d_adversarial,d_reconstruction,g_total,g_adversarial,g_area,g_overlap,g_alignment,"
         "g_order";
}

std::string to_csv_row(const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.step), r.d_total, r.d_adversarial, r.d_reconstruction, r.g_total,
                r.g_adversarial, r.g_area, r.g_overlap, r.g_alignment, r.g_order);
  return buf;
}

void to_json(nlohmann::json& j, const EvalRecord& r) {
  j = nlohmann::json{{"step", r.step},
                     {"overlap_index", r.overlap_index},
                     {"alignment_index", r.alignment_index},
                     {"mean_area_difference", r.mean_area_difference}};
}

std::vector<Geometry> sample_initial_geometries(int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample_initial_geometries: N must be >= 1");
  auto t = sample_initial_geometry_tensor(1, n, seed, torch::kFloat64);
  auto a = t.accessor<double, 3>();
  std::vector<Geometry> out(n);
  for (int i = 0; i < n; ++i) out[i] = Geometry{a[0][i][0], a[0][i][1], a[0][i][2], a[0][i][3]};
  return out;
}

torch::Tensor sample_initial_geometry_tensor(int64_t batch, int64_t n, std::uint64_t seed,
                                             torch::ScalarType dtype) {
  if (batch < 0 || n < 0) throw ValidationError("sample_initial_geometry_tensor: negative size");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.5, 0.15);
  auto t = torch::empty({batch, n, 4}, torch::kFloat64);
  auto* p = t.data_ptr<double>();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = std::clamp(normal(rng), 0.05, 0.95);
  return t.to(dtype);
}

GeneratorInput make_generator_input(const LayoutBatch& layouts, const ConditioningOptions& options,
                                    std::uint64_t seed) {
  const auto dtype = layouts.geoms.scalar_type();
  GeneratorInput in;
  in.class_probs = layouts.class_probs;
  in.init_geoms = sample_initial_geometry_tensor(layouts.batch_size(), layouts.slots(), seed, dtype);
  in.attributes = layouts.attributes.clone();
  if (!options.order_conditioning) in.attributes.select(-1, 2).zero_();
  auto frozen = layouts.frozen > 0.5;
  if (!options.frozen_classes.empty()) {
    auto ids = layouts.class_probs.argmax(-1);
    for (int c : options.frozen_classes) frozen = frozen.logical_or(ids == c);
  }
  in.frozen = (frozen.logical_and(layouts.mask > 0.5)).to(dtype);
  in.frozen_geoms = layouts.geoms;
  in.mask = layouts.mask;
  return in;
}

namespace {

using AdamState = torch::optim::AdamParamState;

void export_adam(torch::optim::Adam& opt, const torch::nn::Module& module, const std::string& prefix,
                 std::map<std::string, torch::Tensor>& out) {
  auto& state = opt.state();
  for (const auto& item : module.named_parameters()) {
    auto it = state.find(item.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const AdamState&>(*it->second);
    const std::string key = prefix + item.key();
    out[key + "/exp_avg"] = s.exp_avg().detach().clone();
    out[key + "/exp_avg_sq"] = s.exp_avg_sq().detach().clone();
    out[key + "/step"] = torch::tensor(static_cast<int64_t>(s.step()), torch::kInt64);
  }
}

void import_adam(torch::optim::Adam& opt, const torch::nn::Module& module, const std::string& prefix,
                 const std::map<std::string, torch::Tensor>& in) {
  auto& state = opt.state();
  for (const auto& item : module.named_parameters()) {
    const std::string key = prefix + item.key();
    auto avg = in.find(key + "/exp_avg");
    auto sq = in.find(key + "/exp_avg_sq");
    auto step = in.find(key + "/step");
    if (avg == in.end() && sq == in.end() && step == in.end()) continue;
    if (avg == in.end() || sq == in.end() || step == in.end())
      throw ValidationError("checkpoint optimizer state for '" + key + "' is incomplete");
    if (!avg->second.sizes().equals(item.value().sizes()) || !sq->second.sizes().equals(item.value().sizes()))
      throw ValidationError("checkpoint optimizer state for '" + key + "' has the wrong shape");
    auto s = std::make_unique<AdamState>();
    s->step(step->second.item<int64_t>());
    s->exp_avg(avg->second.to(item.value().scalar_type()).clone());
    s->exp_avg_sq(sq->second.to(item.value().scalar_type()).clone());
    state[item.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

double checked(const torch::Tensor& t, const char* term, std::int64_t step) {
  const double v = t.item<double>();
  if (!std::isfinite(v))
    throw TrainingError("non-finite loss term '" + std::string(term) + "' at step " + std::to_string(step));
  return v;
}

torch::Tensor areas(const torch::Tensor& geoms) { return geoms.select(-1, 2) * geoms.select(-1, 3); }

/// Temporarily stops gradient accumulation into a module's parameters.
class FrozenParameters {
 public:
  explicit FrozenParameters(torch::nn::Module& m) : params_(m.parameters()) {
    for (auto& p : params_) p.requires_grad_(false);
  }
  ~FrozenParameters() {
    for (auto& p : params_) p.requires_grad_(true);
  }

 private:
  std::vector<torch::Tensor> params_;
};

}  // namespace

Trainer::Trainer(TrainingConfig config) : config_(std::move(config)) {
  config_.validate();
  weights_ = config_.effective_weights();
  auto init = ModelCheckpoint::initialize(config_.generator, config_.effective_discriminator(), config_.seed);
  generator_ = init.generator;
  discriminator_ = init.discriminator;
  build_optimizers();
}

Trainer::Trainer(TrainingConfig config, const ModelCheckpoint& checkpoint) : config_(std::move(config)) {
  config_.validate();
  weights_ = config_.effective_weights();
  if (!(checkpoint.generator_config == config_.generator))
    throw ValidationError("checkpoint generator config differs from the training config");
  if (!(checkpoint.discriminator_config == config_.effective_discriminator()))
    throw ValidationError("checkpoint discriminator config differs from the training config");
  auto copy = checkpoint.clone();
  generator_ = copy.generator;
  discriminator_ = copy.discriminator;
  step_ = checkpoint.step;
  build_optimizers();
  import_adam(*g_opt_, *generator_, "generator/", checkpoint.optimizer_state);
  import_adam(*d_opt_, *discriminator_, "discriminator/", checkpoint.optimizer_state);
}

void Trainer::build_optimizers() {
  auto options = torch::optim::AdamOptions(config_.learning_rate).betas({config_.beta1, config_.beta2});
  g_opt_ = std::make_unique<torch::optim::Adam>(generator_->parameters(), options);
  d_opt_ = std::make_unique<torch::optim::Adam>(discriminator_->parameters(), options);
}

std::uint64_t Trainer::step_seed(std::uint64_t stream) const {
  return mix_seed(mix_seed(config_.seed, static_cast<std::uint64_t>(step_)), stream);
}

LossReport Trainer::train_step(const LayoutBatch& real, const GeneratorInput& spec) {
  const auto& dcfg = discriminator_->config();
  const int W = dcfg.image_width, H = dcfg.image_height;
  const bool local = dcfg.local_branch;
  const double b = dcfg.dropout_b;
  const auto dtype = generator_->parameters().front().scalar_type();
  spec.validate(config_.generator.num_classes);
  if (real.class_probs.size(-1) != config_.generator.num_classes)
    throw ValidationError("real batch has the wrong number of classes");

  const auto real_probs = real.class_probs.to(dtype);
  const auto real_geoms = real.geoms.to(dtype);
  const auto real_mask = real.mask.to(dtype);
  const auto spec_probs = spec.class_probs.to(dtype);
  const auto spec_mask = spec.mask.to(dtype);
  const auto B_real = real.batch_size(), N_real = real.slots();
  const auto B_fake = spec.class_probs.size(0), N_fake = spec.class_probs.size(1);

  LossReport report;
  report.step = step_;

  // Discriminator update.
  {
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = generator_->forward(spec);
    }
    auto real_global = compose_layout_image(real_probs, real_geoms, W, H, real_mask);
    auto fake_global = compose_layout_image(spec_probs, fake, W, H, spec_mask);
    torch::Tensor real_local, fake_local;
    if (local) {
      real_local = compose_dropout_image(real_probs, real_geoms,
                                         sample_dropout_masks(B_real, N_real, b, step_seed(1), dtype), W, H,
                                         real_mask);
      fake_local = compose_dropout_image(spec_probs, fake,
                                         sample_dropout_masks(B_fake, N_fake, b, step_seed(2), dtype), W, H,
                                         spec_mask);
    }
    d_opt_->zero_grad();
    auto out_real = discriminator_->forward(real_global, real_local);
    auto out_fake = discriminator_->forward(fake_global, fake_local);
    auto adv = neg_log_sigmoid(out_real.logit_global).mean() + neg_log_one_minus_sigmoid(out_fake.logit_global).mean();
    if (local)
      adv = adv + neg_log_sigmoid(out_real.logit_local).mean() +
            neg_log_one_minus_sigmoid(out_fake.logit_local).mean();
    // Class-area reconstruction on every rendered input, real and generated.
    auto s_real = class_area_totals(real_probs, areas(real_geoms), real_mask);
    auto s_fake = class_area_totals(spec_probs, areas(fake), spec_mask);
    auto rec = (out_real.area - s_real).abs().sum(-1).mean() + (out_fake.area - s_fake).abs().sum(-1).mean();
    auto total = adv + weights_.w_r * rec;
    report.d_adversarial = checked(adv, "discriminator adversarial", step_);
    report.d_reconstruction = checked(rec, "discriminator reconstruction", step_);
    report.d_total = checked(total, "discriminator total", step_);
    total.backward();
    d_opt_->step();
  }

  // Generator update.
  {
    FrozenParameters freeze(*discriminator_);
    g_opt_->zero_grad();
    auto geoms = generator_->forward(spec);
    auto global = compose_layout_image(spec_probs, geoms, W, H, spec_mask);
    torch::Tensor local_img;
    if (local)
      local_img = compose_dropout_image(spec_probs, geoms,
                                        sample_dropout_masks(B_fake, N_fake, b, step_seed(3), dtype), W, H,
                                        spec_mask);
    auto out = discriminator_->forward(global, local_img);
    LossComponents c;
    c.adversarial = neg_log_sigmoid(out.logit_global).mean();
    if (local) c.adversarial = c.adversarial + neg_log_sigmoid(out.logit_local).mean();
    c.area = margin_area_loss(areas(geoms), spec.attributes.select(-1, 0).to(dtype), config_.alpha, spec_mask).mean();
    c.overlap = overlap_loss(geoms, spec_mask).mean();
    c.alignment = alignment_loss(geoms, spec_mask).mean();
    if (config_.order_conditioning) {
      if (!real.orders.defined() || real.orders.size(0) != B_fake || real.orders.size(1) != N_fake)
        throw ValidationError("order conditioning requires reading orders aligned with the element specs");
      c.order = order_loss(real.orders, origin_distance(geoms), spec_mask).mean();
    }
    auto total = generator_total_loss(c, weights_);
    report.g_adversarial = checked(c.adversarial, "generator adversarial", step_);
    report.g_area = checked(c.area, "area", step_);
    report.g_overlap = checked(c.overlap, "overlap", step_);
    report.g_alignment = checked(c.alignment, "alignment", step_);
    report.g_order = c.order.defined() ? checked(c.order, "order", step_) : 0.0;
    report.g_total = checked(total, "generator total", step_);
    total.backward();
    g_opt_->step();
  }

  ++step_;
  return report;
}

LossReport Trainer::train_step(std::span<const Layout> corpus) {
  if (corpus.empty()) throw ValidationError("training corpus is empty");
  std::mt19937_64 rng(step_seed(0));
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::vector<Layout> batch;
  batch.reserve(config_.batch_size);
  for (int i = 0; i < config_.batch_size; ++i) batch.push_back(corpus[pick(rng)]);
  auto real = make_batch(batch, config_.generator.num_classes);
  ConditioningOptions options{config_.order_conditioning, config_.frozen_classes};
  auto spec = make_generator_input(real, options, step_seed(4));
  return train_step(real, spec);
}

ModelCheckpoint Trainer::checkpoint() const {
  ModelCheckpoint ckpt;
  ckpt.generator_config = config_.generator;
  ckpt.discriminator_config = config_.effective_discriminator();
  ckpt.training_config = config_;
  ckpt.aspect_class = config_.aspect_class;
  ckpt.order_conditioning = config_.order_conditioning;
  ckpt.seed = config_.seed;
  ckpt.step = step_;
  ckpt.generator = std::dynamic_pointer_cast<GeneratorImpl>(generator_->clone());
  ckpt.discriminator = std::dynamic_pointer_cast<DiscriminatorImpl>(discriminator_->clone());
  export_adam(*g_opt_, *generator_, "generator/", ckpt.optimizer_state);
  export_adam(*d_opt_, *discriminator_, "discriminator/", ckpt.optimizer_state);
  return ckpt;
}

std::vector<Layout> generate_from_conditions(Generator& generator, std::span<const Layout> layouts,
                                             const ConditioningOptions& options, std::uint64_t seed,
                                             int num_classes) {
  if (layouts.empty()) return {};
  auto batch = make_batch(layouts, num_classes);
  auto input = make_generator_input(batch, options, seed);
  torch::NoGradGuard no_grad;
  auto geoms = generator->forward(input);
  return apply_geometries(layouts, geoms);
}

namespace {

EvalRecord evaluate(Generator& generator, std::span<const Layout> held_out, const TrainingConfig& config,
                    std::int64_t step) {
  ConditioningOptions options{config.order_conditioning, config.frozen_classes};
  // Fixed seed: every evaluation sees the same initial geometries.
  auto generated =
      generate_from_conditions(generator, held_out, options, mix_seed(config.seed, 0xe7a1), config.generator.num_classes);
  EvalRecord r;
  r.step = step;
  r.overlap_index = overlap_index(generated);
  r.alignment_index = alignment_index(generated);
  const auto stats = area_difference_stats(generated);
  for (const auto& [cls, st] : stats) r.mean_area_difference += st.mean;
  if (!stats.empty()) r.mean_area_difference /= static_cast<double>(stats.size());
  return r;
}

}  // namespace

TrainingResult train(const TrainingConfig& config, const std::vector<Layout>& corpus,
                     const TrainingObserver& observer) {
  config.validate();
  if (corpus.empty()) throw ValidationError("training corpus is empty");
  for (size_t i = 0; i < corpus.size(); ++i) {
    const auto& layout = corpus[i];
    if (layout.canvas.aspect_class != config.aspect_class)
      throw ValidationError("layout " + std::to_string(i) + " has aspect class " +
                            std::string(to_string(layout.canvas.aspect_class)) + ", expected " +
                            std::string(to_string(config.aspect_class)));
    for (const auto& e : layout.elements) {
      if (static_cast<int>(e.class_probs.size()) != config.generator.num_classes)
        throw ValidationError("layout " + std::to_string(i) + " has the wrong number of classes");
      if (config.order_conditioning && !e.order)
        throw ValidationError("layout " + std::to_string(i) + " lacks reading-order annotations");
    }
  }

  std::vector<Layout> train_set, held_out;
  if (config.holdout_fraction > 0.0 && corpus.size() > 1) {
    std::tie(train_set, held_out) = split_corpus(corpus, config.holdout_fraction, config.seed);
  } else {
    train_set = corpus;
  }
  if (held_out.size() > static_cast<size_t>(config.eval_samples)) held_out.resize(config.eval_samples);

  Trainer trainer(config);
  TrainingResult result;
  const bool evaluating = config.eval_every > 0 && !held_out.empty();
  if (evaluating) {
    result.evaluations.push_back(evaluate(trainer.generator(), held_out, config, 0));
  }
  for (int s = 0; s < config.steps; ++s) {
    auto report = trainer.train_step(train_set);
    result.history.push_back(report);
    std::optional<EvalRecord> eval;
    const auto done = trainer.step();
    if (evaluating && (done % config.eval_every == 0 || s + 1 == config.steps)) {
      eval = evaluate(trainer.generator(), held_out, config, done);
      result.evaluations.push_back(*eval);
    }
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%08lld.lfckpt", static_cast<long long>(done));
      trainer.checkpoint().save(std::filesystem::path(config.checkpoint_dir) / name);
    }
    if (observer) observer(report, eval);
  }
  result.checkpoint = trainer.checkpoint();
  return result;
}

}  // namespace layoutforge
