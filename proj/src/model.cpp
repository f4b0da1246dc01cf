#include "layoutforge/model.hpp"

#include "layoutforge/batch.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace layoutforge {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume little-endian");

void GeneratorConfig::validate() const {
  if (num_classes < 1) throw ValidationError("generator needs at least one class");
  if (embed_dim < 8) throw ValidationError("embed_dim must be >= 8");
  if (relation_blocks < 1) throw ValidationError("relation_blocks must be >= 1");
  if (heads < 1 || embed_dim % heads != 0) throw ValidationError("heads must divide embed_dim");
  for (int w : decoder_hidden) {
    if (w < 1) throw ValidationError("decoder layer widths must be positive");
  }
}

void DiscriminatorConfig::validate() const {
  if (num_classes < 1) throw ValidationError("discriminator needs at least one class");
  if (!(dropout_b >= 0.0 && dropout_b <= 1.0)) throw ValidationError("dropout_b must lie in [0,1]");
  const int scale = 1 << conv_channels.size();
  if (image_width < scale || image_height < scale || image_width % scale || image_height % scale)
    throw ValidationError("render size must be divisible by 2^(conv layers)");
  for (int c : conv_channels) {
    if (c < 1) throw ValidationError("conv channel counts must be positive");
  }
}

int DiscriminatorConfig::feature_dim() const {
  return conv_channels.empty() ? num_classes : conv_channels.back();
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"num_classes", c.num_classes},         {"embed_dim", c.embed_dim},
                     {"relation_blocks", c.relation_blocks}, {"heads", c.heads},
                     {"decoder_hidden", c.decoder_hidden}, {"layer_norm", c.layer_norm}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  GeneratorConfig d;
  c.num_classes = j.value("num_classes", d.num_classes);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.relation_blocks = j.value("relation_blocks", d.relation_blocks);
  c.heads = j.value("heads", d.heads);
  c.decoder_hidden = j.value("decoder_hidden", d.decoder_hidden);
  c.layer_norm = j.value("layer_norm", d.layer_norm);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = nlohmann::json{{"num_classes", c.num_classes},   {"image_width", c.image_width},
                     {"image_height", c.image_height}, {"conv_channels", c.conv_channels},
                     {"dropout_b", c.dropout_b},       {"local_branch", c.local_branch}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  DiscriminatorConfig d;
  c.num_classes = j.value("num_classes", d.num_classes);
  c.image_width = j.value("image_width", d.image_width);
  c.image_height = j.value("image_height", d.image_height);
  c.conv_channels = j.value("conv_channels", d.conv_channels);
  c.dropout_b = j.value("dropout_b", d.dropout_b);
  c.local_branch = j.value("local_branch", d.local_branch);
}

int init_parameters(torch::nn::Module& module, std::uint64_t seed, double stddev) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  int touched = 0;
  for (const auto& m : module.modules(/*include_self=*/true)) {
    const bool norm = m->as<torch::nn::LayerNorm>() != nullptr;
    for (auto& item : m->named_parameters(/*recurse=*/false)) {
      const std::string& name = item.key();
      auto& p = item.value();
      if (name == "bias") {
        p.zero_();
      } else if (norm) {
        p.fill_(1.0);
      } else {
        p.normal_(0.0, stddev, gen);
      }
      ++touched;
    }
  }
  return touched;
}

void GeneratorInput::validate(int num_classes) const {
  if (!class_probs.defined() || !init_geoms.defined() || !attributes.defined())
    throw ValidationError("generator input is missing tensors");
  if (class_probs.dim() != 3 || class_probs.size(2) != num_classes)
    throw ValidationError("class probabilities must be [B,N,M] with M = " + std::to_string(num_classes));
  const auto bn = class_probs.sizes().slice(0, 2);
  auto check = [&](const torch::Tensor& t, int64_t last, const char* what) {
    if (!t.defined() || t.dim() != 3 || !t.sizes().slice(0, 2).equals(bn) || t.size(2) != last)
      throw ValidationError(std::string("generator input '") + what + "' has inconsistent shape");
  };
  check(init_geoms, 4, "init_geoms");
  check(attributes, 3, "attributes");
  check(frozen_geoms, 4, "frozen_geoms");
  if (!frozen.defined() || !frozen.sizes().equals(bn) || !mask.defined() || !mask.sizes().equals(bn))
    throw ValidationError("generator frozen/mask flags must be [B,N]");
  if ((attributes.select(-1, 1) < 0).any().item<bool>())
    throw ValidationError("aspect ratio attributes must be >= 0");
}

RelationBlockImpl::RelationBlockImpl(int dim, int heads) : dim_(dim), heads_(heads) { reset(); }

void RelationBlockImpl::reset() {
  query_ = register_module("query", torch::nn::Linear(dim_, dim_));
  key_ = register_module("key", torch::nn::Linear(dim_, dim_));
  value_ = register_module("value", torch::nn::Linear(dim_, dim_));
  out_ = register_module("out", torch::nn::Linear(dim_, dim_));
}

torch::Tensor RelationBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto b = x.size(0);
  const auto n = x.size(1);
  const int64_t head_dim = dim_ / heads_;
  auto split = [&](const torch::Tensor& t) {
    return t.view({b, n, heads_, head_dim}).transpose(1, 2);  // [B,h,N,d]
  };
  auto q = split(query_->forward(x));
  auto k = split(key_->forward(x));
  auto v = split(value_->forward(x));
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  auto key_mask = (mask > 0.5).view({b, 1, 1, n});
  scores = scores.masked_fill(key_mask.logical_not(), -1e9);
  auto attended = torch::matmul(torch::softmax(scores, -1), v);  // [B,h,N,d]
  attended = attended.transpose(1, 2).reshape({b, n, dim_});
  return torch::relu(x + out_->forward(attended));
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  reset();
}

void GeneratorImpl::reset() {
  const int d = config_.embed_dim;
  auto hidden = [&](torch::nn::Sequential& seq, int in, int out) {
    seq->push_back(torch::nn::Linear(in, out));
    if (config_.layer_norm) seq->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({out})));
    seq->push_back(torch::nn::ReLU());
  };
  encoder_ = register_module("encoder", torch::nn::Sequential());
  hidden(encoder_, config_.input_features(), d);
  hidden(encoder_, d, d);
  relations_ = register_module("relations", torch::nn::ModuleList());
  for (int i = 0; i < config_.relation_blocks; ++i) relations_->push_back(RelationBlock(d, config_.heads));
  decoder_ = register_module("decoder", torch::nn::Sequential());
  int in = d;
  for (int width : config_.decoder_hidden) {
    hidden(decoder_, in, width);
    in = width;
  }
  decoder_->push_back(torch::nn::Linear(in, 4));
}

torch::Tensor GeneratorImpl::forward(const GeneratorInput& input) {
  input.validate(config_.num_classes);
  auto dtype = encoder_->parameters().front().scalar_type();
  auto mask = input.mask.to(dtype);
  auto attrs = input.attributes.to(dtype);
  auto features = torch::cat({input.class_probs.to(dtype), input.init_geoms.to(dtype), attrs,
                              input.frozen.to(dtype).unsqueeze(-1)},
                             -1);
  auto x = encoder_->forward(features);
  for (const auto& block : *relations_) x = block->as<RelationBlock>()->forward(x, mask);
  auto raw = torch::sigmoid(decoder_->forward(x));  // [B,N,4]

  auto r = attrs.select(-1, 1);
  // Ratio-fixed widths are limited to 1/r so that h = r * w stays inside [0,1].
  auto width_scale = torch::where(r > 0, 1 / torch::clamp_min(r, 1.0), torch::ones_like(r));
  auto w = raw.select(-1, 2) * width_scale;
  auto h = apply_aspect_constraint(w, raw.select(-1, 3), r);
  auto geoms = torch::stack({raw.select(-1, 0), raw.select(-1, 1), w, h}, -1);

  auto frozen = (input.frozen > 0.5).unsqueeze(-1);
  geoms = torch::where(frozen, input.frozen_geoms.to(dtype), geoms);
  return geoms * mask.unsqueeze(-1);
}

ConvBranchImpl::ConvBranchImpl(DiscriminatorConfig config) : config_(std::move(config)) {
  config_.validate();
  reset();
}

void ConvBranchImpl::reset() {
  convs_ = register_module("convs", torch::nn::Sequential());
  int in = config_.num_classes;
  for (int c : config_.conv_channels) {
    convs_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, c, 4).stride(2).padding(1)));
    convs_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    in = c;
  }
  const int scale = 1 << config_.conv_channels.size();
  const int flat = in * (config_.image_width / scale) * (config_.image_height / scale);
  head_ = register_module("head", torch::nn::Linear(flat, 1));
}

torch::Tensor ConvBranchImpl::features(const torch::Tensor& image) {
  return convs_->is_empty() ? image : convs_->forward(image);
}

torch::Tensor ConvBranchImpl::logit(const torch::Tensor& feature_map) {
  return head_->forward(feature_map.flatten(1)).squeeze(-1);
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(std::move(config)) {
  config_.validate();
  reset();
}

void DiscriminatorImpl::reset() {
  global_ = register_module("global", ConvBranch(config_));
  if (config_.local_branch) local_ = register_module("local", ConvBranch(config_));
  area_head_ = register_module("area_head", torch::nn::Linear(config_.feature_dim(), config_.num_classes));
}

void DiscriminatorImpl::check_image(const torch::Tensor& image) const {
  if (image.dim() != 4 || image.size(1) != config_.num_classes || image.size(2) != config_.image_height ||
      image.size(3) != config_.image_width)
    throw ValidationError("discriminator expects [B," + std::to_string(config_.num_classes) + "," +
                          std::to_string(config_.image_height) + "," +
                          std::to_string(config_.image_width) + "] images");
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& image_global,
                                               const torch::Tensor& image_local) {
  check_image(image_global);
  DiscriminatorOutput out;
  auto fmap = global_->features(image_global);
  out.logit_global = global_->logit(fmap);
  out.area = torch::softplus(area_head_->forward(fmap.mean({2, 3})));
  if (config_.local_branch) {
    if (!image_local.defined()) throw ValidationError("local branch requires a dropout image");
    check_image(image_local);
    out.logit_local = local_->logit(local_->features(image_local));
  }
  return out;
}

torch::Tensor DiscriminatorImpl::pooled_features(const torch::Tensor& image_global) {
  check_image(image_global);
  return global_->features(image_global).mean({2, 3});
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[8] = {'L', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    default: throw ValidationError("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  throw ValidationError("unsupported tensor dtype '" + name + "' in checkpoint");
}

void collect(const torch::nn::Module& module, const std::string& prefix,
             std::vector<std::pair<std::string, torch::Tensor>>& out) {
  for (auto& item : module.named_parameters()) out.emplace_back(prefix + item.key(), item.value());
}

void restore(torch::nn::Module& module, const std::string& prefix,
             const std::map<std::string, torch::Tensor>& tensors) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters()) {
    auto it = tensors.find(prefix + item.key());
    if (it == tensors.end()) throw ValidationError("checkpoint is missing tensor '" + prefix + item.key() + "'");
    if (!it->second.sizes().equals(item.value().sizes()))
      throw ValidationError("checkpoint tensor '" + it->first + "' has the wrong shape");
    item.value().copy_(it->second);
  }
}

}  // namespace

ModelCheckpoint ModelCheckpoint::initialize(const GeneratorConfig& g, const DiscriminatorConfig& d,
                                            std::uint64_t seed) {
  if (g.num_classes != d.num_classes) throw ValidationError("generator and discriminator class counts differ");
  ModelCheckpoint ckpt;
  ckpt.generator_config = g;
  ckpt.discriminator_config = d;
  ckpt.seed = seed;
  ckpt.generator = Generator(g);
  ckpt.discriminator = Discriminator(d);
  init_parameters(*ckpt.generator, seed);
  init_parameters(*ckpt.discriminator, seed ^ 0x9e3779b97f4a7c15ULL);
  return ckpt;
}

ModelCheckpoint ModelCheckpoint::clone() const {
  ModelCheckpoint copy = *this;
  copy.generator = std::dynamic_pointer_cast<GeneratorImpl>(generator->clone());
  copy.discriminator = std::dynamic_pointer_cast<DiscriminatorImpl>(discriminator->clone());
  copy.optimizer_state.clear();
  for (const auto& [k, v] : optimizer_state) copy.optimizer_state.emplace(k, v.clone());
  return copy;
}

std::string ModelCheckpoint::serialize() const {
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  collect(*generator, "generator/", tensors);
  collect(*discriminator, "discriminator/", tensors);
  for (const auto& [k, v] : optimizer_state) tensors.emplace_back("optimizer/" + k, v);

  nlohmann::json header;
  header["format"] = "layoutforge-checkpoint";
  header["version"] = kVersion;
  header["generator_config"] = generator_config;
  header["discriminator_config"] = discriminator_config;
  header["training_config"] = training_config;
  header["aspect_class"] = std::string(to_string(aspect_class));
  header["order_conditioning"] = order_conditioning;
  header["seed"] = seed;
  header["step"] = step;

  std::string blobs;
  auto index = nlohmann::json::array();
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().cpu().contiguous();
    const auto nbytes = static_cast<std::size_t>(t.numel()) * t.element_size();
    index.push_back({{"name", name},
                     {"dtype", dtype_name(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", blobs.size()},
                     {"nbytes", nbytes}});
    blobs.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  header["tensors"] = index;

  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  out += blobs;
  return out;
}

void ModelCheckpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

ModelCheckpoint ModelCheckpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ValidationError("not a layoutforge checkpoint");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof kMagic, sizeof len);
  const std::size_t header_start = sizeof kMagic + sizeof len;
  if (bytes.size() < header_start + len) throw ValidationError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_start, len));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (!header.contains("version")) throw ValidationError("checkpoint header has no version field");
  if (header["version"].get<int>() != kVersion)
    throw ValidationError("unsupported checkpoint version " + header["version"].dump());

  ModelCheckpoint ckpt;
  ckpt.generator_config = header.at("generator_config").get<GeneratorConfig>();
  ckpt.discriminator_config = header.at("discriminator_config").get<DiscriminatorConfig>();
  ckpt.training_config = header.value("training_config", nlohmann::json::object());
  ckpt.aspect_class = aspect_class_from_string(header.at("aspect_class").get<std::string>());
  ckpt.order_conditioning = header.value("order_conditioning", false);
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.generator = Generator(ckpt.generator_config);
  ckpt.discriminator = Discriminator(ckpt.discriminator_config);

  const std::size_t blob_start = header_start + len;
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto nbytes = entry.at("nbytes").get<std::size_t>();
    if (blob_start + offset + nbytes > bytes.size())
      throw ValidationError("checkpoint tensor '" + name + "' is truncated");
    auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, dtype_from_name(entry.at("dtype").get<std::string>()));
    if (static_cast<std::size_t>(t.numel()) * t.element_size() != nbytes)
      throw ValidationError("checkpoint tensor '" + name + "' has inconsistent size");
    std::memcpy(t.data_ptr(), bytes.data() + blob_start + offset, nbytes);
    tensors.emplace(name, t);
  }
  restore(*ckpt.generator, "generator/", tensors);
  restore(*ckpt.discriminator, "discriminator/", tensors);
  const std::string opt_prefix = "optimizer/";
  for (auto& [name, t] : tensors) {
    if (name.rfind(opt_prefix, 0) == 0) ckpt.optimizer_state.emplace(name.substr(opt_prefix.size()), t);
  }
  return ckpt;
}

ModelCheckpoint ModelCheckpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace layoutforge
