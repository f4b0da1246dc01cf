#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "layoutforge/core.hpp"
#include "layoutforge/data.hpp"
#include "layoutforge/model.hpp"
#include "layoutforge/training.hpp"

namespace lf_test {

using namespace layoutforge;

inline Element element(int cls, double xc, double yc, double w, double h) {
  auto e = Element::of_class(cls, 6, Geometry{xc, yc, w, h});
  e.attributes.s = w * h;
  return e;
}

inline Layout layout_of(std::vector<Element> elements, Canvas canvas = Canvas::from_size(512, 512)) {
  Layout l;
  l.elements = std::move(elements);
  l.canvas = canvas;
  return l;
}

/// Small synthetic corpus with attributes and reading orders filled in.
inline std::vector<Layout> small_corpus(int size, std::uint64_t seed = 3,
                                        AspectClass aspect = AspectClass::square) {
  CorpusConfig cc;
  cc.size = size;
  cc.seed = seed;
  cc.aspect_mix = {{aspect, 1.0}};
  auto corpus = generate_synthetic_corpus(cc);
  for (auto& l : corpus) l = annotate(std::move(l));
  return corpus;
}

inline GeneratorConfig tiny_generator() {
  GeneratorConfig g;
  g.embed_dim = 16;
  g.decoder_hidden = {16};
  g.relation_blocks = 1;
  return g;
}

inline DiscriminatorConfig tiny_discriminator(bool local = true) {
  DiscriminatorConfig d;
  d.image_width = d.image_height = 16;
  d.conv_channels = {4, 8};
  d.local_branch = local;
  return d;
}

inline TrainingConfig tiny_training(int steps = 3) {
  TrainingConfig c;
  c.learning_rate = 1e-4;
  c.batch_size = 8;
  c.steps = steps;
  c.seed = 11;
  c.eval_samples = 16;
  c.generator = tiny_generator();
  c.discriminator = tiny_discriminator();
  return c;
}

inline ModelCheckpoint tiny_checkpoint(std::uint64_t seed = 5, bool order_conditioning = false) {
  auto ck = ModelCheckpoint::initialize(tiny_generator(), tiny_discriminator(), seed);
  ck.order_conditioning = order_conditioning;
  ck.training_config = tiny_training();
  ck.training_config["order_conditioning"] = order_conditioning;
  return ck;
}

/// Non-degenerate random boxes kept away from the unit-square border.
inline std::vector<Geometry> random_boxes(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> size(0.1, 0.5), pos(0.3, 0.7);
  std::vector<Geometry> out;
  for (int i = 0; i < n; ++i) out.push_back({pos(rng), pos(rng), size(rng), size(rng)});
  return out;
}

inline torch::Tensor to_tensor(const std::vector<Geometry>& boxes) {
  auto t = torch::empty({static_cast<int64_t>(boxes.size()), 4}, torch::kFloat64);
  auto a = t.accessor<double, 2>();
  for (size_t i = 0; i < boxes.size(); ++i) {
    a[i][0] = boxes[i].xc;
    a[i][1] = boxes[i].yc;
    a[i][2] = boxes[i].w;
    a[i][3] = boxes[i].h;
  }
  return t;
}

/// Relative error |a - f| / max(|a|, |f|) between the autodiff gradient a and
/// the central finite-difference gradient f of a scalar function, using
/// Euclidean norms over every entry of x (double precision).
template <typename F>
double fd_relative_error(F&& f, const torch::Tensor& x0, double step = 1e-4) {
  auto x = x0.clone().set_requires_grad(true);
  auto y = f(x);
  torch::Tensor grad = torch::autograd::grad({y}, {x})[0].contiguous();
  auto base = x0.clone().contiguous();
  auto flat = base.view({-1});
  torch::Tensor g = grad.view({-1});
  double diff = 0.0, norm_an = 0.0, norm_fd = 0.0;
  torch::NoGradGuard no_grad;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].template item<double>();
    flat[i] = orig + step;
    const double up = f(base).template item<double>();
    flat[i] = orig - step;
    const double down = f(base).template item<double>();
    flat[i] = orig;
    const double fd = (up - down) / (2 * step);
    const double an = g[i].template item<double>();
    diff += (fd - an) * (fd - an);
    norm_an += an * an;
    norm_fd += fd * fd;
  }
  const double denom = std::max({std::sqrt(norm_an), std::sqrt(norm_fd), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace lf_test
