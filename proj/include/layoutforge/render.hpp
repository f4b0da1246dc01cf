#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "layoutforge/core.hpp"

namespace layoutforge {

/// Wireframe of each box, shape [..., H, W], for boxes [..., 4].
///
/// Pixel (u, v) is sampled at integer coordinates on a canvas spanning
/// [0, W] x [0, H]. Each edge contributes (along-edge coverage) x (1 px hat
/// across the edge); the four edges are merged with max. For the top edge:
///   coverage(u) = clamp(min(u - xl*W, xr*W - u) + 1, 0, 1)
///   hat(v)      = max(0, 1 - |v - yt*H|)
torch::Tensor render_element_wireframe(const torch::Tensor& geoms, int width, int height);

/// I(c, v, u) = max_i weight_i * p_ic * F_i(u, v); shape [B, M, H, W].
/// Accepts [N,M]/[N,4] (returns [M,H,W]) or batched [B,N,M]/[B,N,4].
/// `element_weights` ([B,N] or [N]) defaults to all ones.
torch::Tensor compose_layout_image(const torch::Tensor& class_probs, const torch::Tensor& geoms,
                                   int width, int height,
                                   const torch::Tensor& element_weights = {});

struct DropoutMask {
  std::vector<std::uint8_t> bits;
  double keep_probability = 1.0;

  torch::Tensor as_tensor(torch::ScalarType dtype = torch::kFloat32) const;
};

/// Independent Bernoulli(b) bits, reproducible from `seed`.
DropoutMask sample_dropout_mask(int n, double keep_probability, std::uint64_t seed);
/// [B,N] float mask of Bernoulli(b) bits.
torch::Tensor sample_dropout_masks(int64_t batch, int64_t n, double keep_probability,
                                   std::uint64_t seed, torch::ScalarType dtype = torch::kFloat32);

/// compose_layout_image with element i scaled by mask bit r_i.
torch::Tensor compose_dropout_image(const torch::Tensor& class_probs, const torch::Tensor& geoms,
                                    const torch::Tensor& mask, int width, int height,
                                    const torch::Tensor& element_weights = {});
torch::Tensor compose_dropout_image(const torch::Tensor& class_probs, const torch::Tensor& geoms,
                                    const DropoutMask& mask, int width, int height);

struct StyleConfig {
  std::map<std::string, std::string> palette;  // class name -> CSS color
  bool show_labels = true;
  bool show_orders = false;
  bool placeholder_content = true;
  double stroke_width = 2.0;
  std::string background = "#ffffff";
};

/// Palette used for classes missing from a style.
const std::map<std::string, std::string>& default_palette();

/// Schematic SVG 1.1 document with one rect per element.
std::string export_svg(const Layout& layout, const StyleConfig& style = {},
                       const ClassRegistry& classes = ClassRegistry::defaults());

}  // namespace layoutforge
