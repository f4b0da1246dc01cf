#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "layoutforge/core.hpp"

namespace layoutforge {

/// Padded tensor view of a set of layouts. Shapes use B layouts and N slots;
/// `mask` marks real elements, padded slots carry zeros.
struct LayoutBatch {
  torch::Tensor class_probs;  // [B,N,M]
  torch::Tensor geoms;        // [B,N,4] as (xc, yc, w, h)
  torch::Tensor attributes;   // [B,N,3] as (s, r, d)
  torch::Tensor mask;         // [B,N] 1 for real elements
  torch::Tensor frozen;       // [B,N] 1 where geometry is a fixed condition
  torch::Tensor orders;       // [B,N] int64 reading order, -1 when absent

  int64_t batch_size() const { return geoms.size(0); }
  int64_t slots() const { return geoms.size(1); }
  LayoutBatch to(torch::ScalarType dtype) const;
};

/// Packs layouts into a padded batch; `slots` of 0 pads to the largest layout.
LayoutBatch make_batch(std::span<const Layout> layouts, int num_classes,
                       torch::ScalarType dtype = torch::kFloat32, int slots = 0);

/// Writes geometries of a batch back into copies of the given layouts.
std::vector<Layout> apply_geometries(std::span<const Layout> layouts, const torch::Tensor& geoms);

/// Splits the last dimension of [...,4] center/size boxes into edges.
struct EdgeTensors {
  torch::Tensor xl, yt, xc, yc, xr, yb;
};
EdgeTensors derive_corners(const torch::Tensor& geoms);

/// sqrt(xl^2 + yt^2) with a zero (sub)gradient at the origin.
torch::Tensor origin_distance(const torch::Tensor& geoms);

/// Eq. form h = 1[r=0] h + r w, elementwise.
torch::Tensor apply_aspect_constraint(const torch::Tensor& w_pred, const torch::Tensor& h_pred,
                                      const torch::Tensor& r);

/// Pairwise intersection areas [...,N,N] of boxes [...,N,4].
torch::Tensor pairwise_intersection(const torch::Tensor& geoms);

}  // namespace layoutforge
