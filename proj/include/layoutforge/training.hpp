#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "layoutforge/batch.hpp"
#include "layoutforge/core.hpp"
#include "layoutforge/losses.hpp"
#include "layoutforge/model.hpp"

namespace layoutforge {

/// Raised when a loss term turns non-finite; names the term.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 64;
  int steps = 0;
  double dropout_b = 0.5;
  bool local_branch = true;
  LossWeights weights;
  double alpha = 0.3;
  std::uint64_t seed = 0;
  AspectClass aspect_class = AspectClass::square;
  /// Feeds d attributes and enables the order loss (adjustment model).
  bool order_conditioning = false;
  /// Classes whose real geometry is supplied as a fixed condition.
  std::vector<int> frozen_classes{kProductImage};
  double holdout_fraction = 0.1;
  int eval_every = 0;  // 0 disables periodic evaluation
  int eval_samples = 128;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_dir;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;

  void validate() const;
  /// Discriminator config with dropout/local-branch settings applied.
  DiscriminatorConfig effective_discriminator() const;
  /// Loss weights with the order weight zeroed unless order conditioning is on.
  LossWeights effective_weights() const;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

/// Every component of one alternating update.
struct LossReport {
  std::int64_t step = 0;
  double d_total = 0, d_adversarial = 0, d_reconstruction = 0;
  double g_total = 0, g_adversarial = 0, g_area = 0, g_overlap = 0, g_alignment = 0, g_order = 0;

  bool operator==(const LossReport&) const = default;
};
void to_json(nlohmann::json& j, const LossReport& r);
std::string loss_report_csv_header();
std::string to_csv_row(const LossReport& r);

struct EvalRecord {
  std::int64_t step = 0;
  double overlap_index = 0;
  double alignment_index = 0;
  double mean_area_difference = 0;
};
void to_json(nlohmann::json& j, const EvalRecord& r);

/// N geometries with every field drawn from N(0.5, 0.15^2) clipped to [0.05, 0.95].
std::vector<Geometry> sample_initial_geometries(int n, std::uint64_t seed);
/// [B,N,4] tensor of such geometries.
torch::Tensor sample_initial_geometry_tensor(int64_t batch, int64_t n, std::uint64_t seed,
                                             torch::ScalarType dtype = torch::kFloat32);

struct ConditioningOptions {
  bool order_conditioning = false;
  std::vector<int> frozen_classes;
};

/// Generator input conditioned on the classes/attributes of `layouts`:
/// random initial geometry, attributes (d zeroed without order conditioning),
/// and frozen classes pinned to their geometry in `layouts`.
GeneratorInput make_generator_input(const LayoutBatch& layouts, const ConditioningOptions& options,
                                    std::uint64_t seed);

/// Mutable training state: both networks and their optimizers.
class Trainer {
 public:
  explicit Trainer(TrainingConfig config);
  /// Resumes from a checkpoint (parameters, optimizer moments, step).
  Trainer(TrainingConfig config, const ModelCheckpoint& checkpoint);

  /// One discriminator update then one generator update.
  LossReport train_step(const LayoutBatch& real, const GeneratorInput& spec);
  /// Samples a batch from `corpus` deterministically from (seed, step) and trains on it.
  LossReport train_step(std::span<const Layout> corpus);

  ModelCheckpoint checkpoint() const;
  std::int64_t step() const { return step_; }
  const TrainingConfig& config() const { return config_; }
  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }

 private:
  void build_optimizers();
  std::uint64_t step_seed(std::uint64_t stream) const;

  TrainingConfig config_;
  LossWeights weights_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> g_opt_;
  std::unique_ptr<torch::optim::Adam> d_opt_;
  std::int64_t step_ = 0;
};

struct TrainingResult {
  ModelCheckpoint checkpoint;
  std::vector<LossReport> history;
  std::vector<EvalRecord> evaluations;
};

using TrainingObserver = std::function<void(const LossReport&, const std::optional<EvalRecord>&)>;

/// Full run: seeded split, `steps` updates, periodic evaluation on the
/// held-out split and optional periodic checkpoints.
TrainingResult train(const TrainingConfig& config, const std::vector<Layout>& corpus,
                     const TrainingObserver& observer = {});

/// Runs the generator on the conditions of `layouts` and returns the refined layouts.
std::vector<Layout> generate_from_conditions(Generator& generator, std::span<const Layout> layouts,
                                             const ConditioningOptions& options, std::uint64_t seed,
                                             int num_classes);

}  // namespace layoutforge
