#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "layoutforge/core.hpp"

namespace layoutforge {

struct GeneratorConfig {
  int num_classes = 6;
  int embed_dim = 128;
  int relation_blocks = 2;
  int heads = 1;
  std::vector<int> decoder_hidden{128};
  /// Per-element layer normalization after each hidden linear layer.
  bool layer_norm = true;

  void validate() const;
  int input_features() const { return num_classes + 8; }
  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  int num_classes = 6;
  int image_width = 64;
  int image_height = 64;
  std::vector<int> conv_channels{32, 64, 128, 256};
  double dropout_b = 0.5;
  bool local_branch = true;

  void validate() const;
  /// Length of pooled last-layer features.
  int feature_dim() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Samples every weight i.i.d. from N(0, 0.02^2) and zeroes biases, in
/// module registration order. Normalization gains are set to 1.
/// Returns the number of tensors touched.
int init_parameters(torch::nn::Module& module, std::uint64_t seed, double stddev = 0.02);

/// Generator inputs; all tensors share the leading [B,N] shape.
struct GeneratorInput {
  torch::Tensor class_probs;   // [B,N,M]
  torch::Tensor init_geoms;    // [B,N,4]
  torch::Tensor attributes;    // [B,N,3] (s, r, d)
  torch::Tensor frozen;        // [B,N] 1 = geometry supplied
  torch::Tensor frozen_geoms;  // [B,N,4]
  torch::Tensor mask;          // [B,N] 1 = real element

  void validate(int num_classes) const;
};

/// Residual self-attention over the elements of each layout.
class RelationBlockImpl : public torch::nn::Cloneable<RelationBlockImpl> {
 public:
  RelationBlockImpl(int dim, int heads);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

 private:
  int dim_;
  int heads_;
  torch::nn::Linear query_{nullptr}, key_{nullptr}, value_{nullptr}, out_{nullptr};
};
TORCH_MODULE(RelationBlock);

/// Encoder -> relation blocks -> decoder -> aspect override -> frozen override.
class GeneratorImpl : public torch::nn::Cloneable<GeneratorImpl> {
 public:
  explicit GeneratorImpl(GeneratorConfig config = {});
  void reset() override;

  /// Refined geometries [B,N,4].
  torch::Tensor forward(const GeneratorInput& input);
  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::ModuleList relations_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(Generator);

/// Strided conv stack with a realness logit head.
class ConvBranchImpl : public torch::nn::Cloneable<ConvBranchImpl> {
 public:
  explicit ConvBranchImpl(DiscriminatorConfig config = {});
  void reset() override;

  /// Last convolutional activation map [B,C,h,w].
  torch::Tensor features(const torch::Tensor& image);
  torch::Tensor logit(const torch::Tensor& feature_map);

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential convs_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ConvBranch);

struct DiscriminatorOutput {
  torch::Tensor logit_global;  // [B]
  torch::Tensor logit_local;   // [B], undefined without a local branch
  torch::Tensor area;          // [B,M] predicted class-area totals

  torch::Tensor p_global() const { return torch::sigmoid(logit_global); }
  torch::Tensor p_local() const {
    return logit_local.defined() ? torch::sigmoid(logit_local) : torch::Tensor();
  }
};

/// Global and local (element-dropout) branches with independent weights and
/// an area-reconstruction head on the global branch.
class DiscriminatorImpl : public torch::nn::Cloneable<DiscriminatorImpl> {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config = {});
  void reset() override;

  /// `image_local` may be undefined when the local branch is disabled.
  DiscriminatorOutput forward(const torch::Tensor& image_global, const torch::Tensor& image_local);
  /// Spatially averaged last global conv activation, [B, feature_dim].
  torch::Tensor pooled_features(const torch::Tensor& image_global);
  const DiscriminatorConfig& config() const { return config_; }

 private:
  void check_image(const torch::Tensor& image) const;

  DiscriminatorConfig config_;
  ConvBranch global_{nullptr};
  ConvBranch local_{nullptr};
  torch::nn::Linear area_head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Self-describing container of model parameters, configs and training state.
///
/// File layout: 8-byte magic "LFCKPT\0\1", little-endian u64 header length,
/// UTF-8 JSON header, then raw little-endian tensor blobs at the offsets the
/// header lists.
struct ModelCheckpoint {
  static constexpr int kVersion = 1;

  GeneratorConfig generator_config;
  DiscriminatorConfig discriminator_config;
  nlohmann::json training_config = nlohmann::json::object();
  AspectClass aspect_class = AspectClass::square;
  bool order_conditioning = false;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  /// Optimizer moments and counters keyed by "<optimizer>/<param>/<slot>".
  std::map<std::string, torch::Tensor> optimizer_state;

  static ModelCheckpoint initialize(const GeneratorConfig& g, const DiscriminatorConfig& d,
                                    std::uint64_t seed);
  ModelCheckpoint clone() const;

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static ModelCheckpoint load(const std::filesystem::path& path);
  static ModelCheckpoint deserialize(const std::string& bytes);
};

}  // namespace layoutforge
