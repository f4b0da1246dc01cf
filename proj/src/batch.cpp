#include "layoutforge/batch.hpp"

#include <algorithm>

namespace layoutforge {

LayoutBatch LayoutBatch::to(torch::ScalarType dtype) const {
  LayoutBatch out = *this;
  out.class_probs = class_probs.to(dtype);
  out.geoms = geoms.to(dtype);
  out.attributes = attributes.to(dtype);
  out.mask = mask.to(dtype);
  out.frozen = frozen.to(dtype);
  return out;
}

LayoutBatch make_batch(std::span<const Layout> layouts, int num_classes, torch::ScalarType dtype,
                       int slots) {
  if (layouts.empty()) throw ValidationError("cannot batch an empty set of layouts");
  int n = slots;
  if (n == 0) {
    for (const auto& l : layouts) n = std::max(n, l.size());
  }
  const auto b = static_cast<int64_t>(layouts.size());
  const auto m = static_cast<int64_t>(num_classes);

  auto probs = torch::zeros({b, n, m}, torch::kFloat64);
  auto geoms = torch::zeros({b, n, 4}, torch::kFloat64);
  auto attrs = torch::zeros({b, n, 3}, torch::kFloat64);
  auto mask = torch::zeros({b, n}, torch::kFloat64);
  auto frozen = torch::zeros({b, n}, torch::kFloat64);
  auto orders = torch::full({b, n}, -1, torch::kInt64);
  auto pa = probs.accessor<double, 3>();
  auto ga = geoms.accessor<double, 3>();
  auto aa = attrs.accessor<double, 3>();
  auto ma = mask.accessor<double, 2>();
  auto fa = frozen.accessor<double, 2>();
  auto oa = orders.accessor<int64_t, 2>();

  for (int64_t i = 0; i < b; ++i) {
    const Layout& layout = layouts[static_cast<std::size_t>(i)];
    if (layout.size() > n) throw ValidationError("layout has more elements than batch slots");
    for (int j = 0; j < layout.size(); ++j) {
      const Element& e = layout.elements[static_cast<std::size_t>(j)];
      if (static_cast<int64_t>(e.class_probs.size()) != m)
        throw ValidationError("element class vector does not match class count");
      for (int64_t c = 0; c < m; ++c) pa[i][j][c] = e.class_probs[static_cast<std::size_t>(c)];
      ga[i][j][0] = e.geometry.xc;
      ga[i][j][1] = e.geometry.yc;
      ga[i][j][2] = e.geometry.w;
      ga[i][j][3] = e.geometry.h;
      aa[i][j][0] = e.attributes.s;
      aa[i][j][1] = e.attributes.r;
      aa[i][j][2] = e.attributes.d;
      ma[i][j] = 1.0;
      fa[i][j] = e.frozen ? 1.0 : 0.0;
      oa[i][j] = e.order ? *e.order : -1;
    }
  }
  return LayoutBatch{probs.to(dtype), geoms.to(dtype), attrs.to(dtype),
                     mask.to(dtype),  frozen.to(dtype), orders};
}

std::vector<Layout> apply_geometries(std::span<const Layout> layouts, const torch::Tensor& geoms) {
  auto g = geoms.detach().to(torch::kFloat64).contiguous();
  auto ga = g.accessor<double, 3>();
  std::vector<Layout> out(layouts.begin(), layouts.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < out[i].elements.size(); ++j) {
      auto& geo = out[i].elements[j].geometry;
      const auto ii = static_cast<int64_t>(i);
      const auto jj = static_cast<int64_t>(j);
      geo = Geometry{ga[ii][jj][0], ga[ii][jj][1], ga[ii][jj][2], ga[ii][jj][3]};
    }
  }
  return out;
}

EdgeTensors derive_corners(const torch::Tensor& geoms) {
  auto xc = geoms.select(-1, 0);
  auto yc = geoms.select(-1, 1);
  auto half_w = geoms.select(-1, 2) / 2;
  auto half_h = geoms.select(-1, 3) / 2;
  return EdgeTensors{xc - half_w, yc - half_h, xc, yc, xc + half_w, yc + half_h};
}

torch::Tensor origin_distance(const torch::Tensor& geoms) {
  const auto edges = derive_corners(geoms);
  auto sq = edges.xl * edges.xl + edges.yt * edges.yt;
  auto positive = sq > 0;
  auto safe = torch::where(positive, sq, torch::ones_like(sq));
  return torch::where(positive, torch::sqrt(safe), torch::zeros_like(sq));
}

torch::Tensor apply_aspect_constraint(const torch::Tensor& w_pred, const torch::Tensor& h_pred,
                                      const torch::Tensor& r) {
  if ((r < 0).any().item<bool>()) throw ValidationError("aspect ratio must be non-negative");
  auto free = (r == 0).to(h_pred.scalar_type());
  return free * h_pred + r * w_pred;
}

torch::Tensor pairwise_intersection(const torch::Tensor& geoms) {
  // 1-D overlap as min(w1, w2, (w1 + w2)/2 - |c1 - c2|), which is exact for
  // identical and nested intervals.
  auto overlap = [](const torch::Tensor& c, const torch::Tensor& w) {
    auto wi = w.unsqueeze(-1), wj = w.unsqueeze(-2);
    auto shifted = (wi + wj) / 2 - torch::abs(c.unsqueeze(-1) - c.unsqueeze(-2));
    return torch::relu(torch::minimum(torch::minimum(wi, wj), shifted));
  };
  auto g = geoms.unbind(-1);
  return overlap(g[0], g[2]) * overlap(g[1], g[3]);
}

}  // namespace layoutforge
