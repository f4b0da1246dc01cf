#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "layoutforge/core.hpp"
#include "layoutforge/render.hpp"

// The renderer and the alignment loss are piecewise smooth. Finite differences
// are only meaningful away from the kinks, so gradient checks sample there.
namespace lf_test {

inline double fractional_gap(double x) { return std::abs(x - std::round(x)); }

// True when no edge, center or edge-diagonal crossing sits near a pixel-grid
// kink of the kernel, and no two elements tie for the max of a channel.
inline bool off_kinks(const torch::Tensor& geoms, const torch::Tensor& probs, int W, int H, double margin) {
  auto g = geoms.accessor<double, 2>();
  for (int64_t i = 0; i < geoms.size(0); ++i) {
    const double xl = (g[i][0] - g[i][2] / 2) * W, xr = (g[i][0] + g[i][2] / 2) * W;
    const double yt = (g[i][1] - g[i][3] / 2) * H, yb = (g[i][1] + g[i][3] / 2) * H;
    std::vector<double> points{xl, xr, yt, yb, (xl + xr) / 2, (yt + yb) / 2};
    for (double x : {xl, xr})
      for (double y : {yt, yb}) {
        points.push_back(x - y);
        points.push_back(x + y);
      }
    for (double v : points)
      if (fractional_gap(v) < margin || fractional_gap(v + 0.5) < margin) return false;
  }
  auto frames = layoutforge::render_element_wireframe(geoms, W, H);       // [N,H,W]
  auto contrib = probs.unsqueeze(-1).unsqueeze(-1) * frames.unsqueeze(1);  // [N,M,H,W]
  auto top2 = std::get<0>(contrib.topk(2, 0));
  auto close = (top2[0] - top2[1] < margin) & (top2[1] > 0);
  return !close.any().item<bool>();
}

// The alignment cost of an element is g of its smallest gap over all
// neighbours and channels; a near tie there is a kink of the min.
inline bool alignment_minimum_is_unique(const std::vector<layoutforge::Geometry>& boxes, double margin) {
  for (size_t i = 0; i < boxes.size(); ++i) {
    auto ci = layoutforge::derive_corners(boxes[i]);
    std::vector<double> gaps;
    for (size_t j = 0; j < boxes.size(); ++j) {
      if (j == i) continue;
      auto cj = layoutforge::derive_corners(boxes[j]);
      for (auto [a, b] : {std::pair{ci.xl, cj.xl}, {ci.xc, cj.xc}, {ci.xr, cj.xr}, {ci.yt, cj.yt}, {ci.yc, cj.yc},
                          {ci.yb, cj.yb}})
        gaps.push_back(std::abs(a - b));
    }
    std::sort(gaps.begin(), gaps.end());
    if (gaps[1] - gaps[0] < margin) return false;
  }
  return true;
}

// The pairwise overlap along an axis is max(0, min(w1, w2, (w1+w2)/2 - |c1-c2|));
// smooth only where those four candidates and |c1-c2| stay apart.
inline bool overlap_is_smooth(const std::vector<layoutforge::Geometry>& boxes, double margin) {
  auto axis_ok = [margin](double c1, double w1, double c2, double w2) {
    const double dc = std::abs(c1 - c2);
    std::vector<double> terms{w1, w2, (w1 + w2) / 2 - dc, 0.0};
    std::sort(terms.begin(), terms.end());
    return dc > margin && terms[1] - terms[0] > margin && terms[2] - terms[1] > margin;
  };
  for (size_t i = 0; i < boxes.size(); ++i)
    for (size_t j = i + 1; j < boxes.size(); ++j) {
      const auto &a = boxes[i], &b = boxes[j];
      if (!axis_ok(a.xc, a.w, b.xc, b.w) || !axis_ok(a.yc, a.h, b.yc, b.h)) return false;
    }
  return true;
}

// The order hinge max(0, d_i - d_j) kinks where two distances tie.
inline bool distances_are_distinct(const std::vector<layoutforge::Geometry>& boxes, double margin) {
  for (size_t i = 0; i < boxes.size(); ++i)
    for (size_t j = i + 1; j < boxes.size(); ++j)
      if (std::abs(layoutforge::origin_distance(boxes[i]) - layoutforge::origin_distance(boxes[j])) < margin)
        return false;
  return true;
}

}  // namespace lf_test
