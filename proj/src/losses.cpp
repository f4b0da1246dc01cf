#include "layoutforge/losses.hpp"

#include <cmath>
#include <vector>

#include "layoutforge/batch.hpp"

namespace layoutforge {

void LossWeights::validate() const {
  for (double w : {w_adv, w_area, w_over, w_alg, w_ord, w_r}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("loss weights must be finite and >= 0");
  }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"w_adv", w.w_adv}, {"w_area", w.w_area}, {"w_over", w.w_over},
                     {"w_alg", w.w_alg}, {"w_ord", w.w_ord},   {"w_r", w.w_r}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  w.w_adv = j.value("w_adv", d.w_adv);
  w.w_area = j.value("w_area", d.w_area);
  w.w_over = j.value("w_over", d.w_over);
  w.w_alg = j.value("w_alg", d.w_alg);
  w.w_ord = j.value("w_ord", d.w_ord);
  w.w_r = j.value("w_r", d.w_r);
}

namespace {

// Brings [N,...] inputs to [1,N,...] and builds a default all-ones mask.
struct Batched {
  bool single;
  torch::Tensor mask;
};

Batched prepare(torch::Tensor& x, int element_dims, const torch::Tensor& mask) {
  Batched b{x.dim() == element_dims + 1, {}};
  if (b.single) x = x.unsqueeze(0);
  if (x.dim() != element_dims + 2) throw ValidationError("unexpected tensor rank for loss input");
  if (mask.defined()) {
    b.mask = (b.single ? mask.unsqueeze(0) : mask).to(x.scalar_type());
    if (!b.mask.sizes().equals(x.sizes().slice(0, 2)))
      throw ValidationError("element mask does not match input shape");
  } else {
    b.mask = torch::ones({x.size(0), x.size(1)}, x.options());
  }
  return b;
}

torch::Tensor finish(const Batched& b, const torch::Tensor& per_layout) {
  return b.single ? per_layout.squeeze(0) : per_layout;
}

torch::Tensor pair_mask(const torch::Tensor& mask) {
  auto n = mask.size(1);
  auto off_diag = 1 - torch::eye(n, mask.options());
  return mask.unsqueeze(2) * mask.unsqueeze(1) * off_diag;
}

}  // namespace

torch::Tensor margin_area_loss(const torch::Tensor& s_pred, const torch::Tensor& s_target,
                               double alpha, const torch::Tensor& mask) {
  if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
  if (!s_pred.sizes().equals(s_target.sizes())) throw ValidationError("area vectors differ in shape");
  auto pred = s_pred.unsqueeze(-1);
  auto target = s_target.unsqueeze(-1);
  auto b = prepare(pred, 1, mask);
  prepare(target, 1, mask);
  pred = pred.squeeze(-1);
  target = target.squeeze(-1);
  auto valid = b.mask > 0;
  if ((valid & (target <= 0)).any().item<bool>())
    throw ValidationError("expected areas must be > 0");
  auto safe_target = torch::where(valid, target, torch::ones_like(target));
  auto rel = torch::abs(pred - safe_target) / safe_target;
  return finish(b, (torch::relu(rel - alpha) * b.mask).sum(1));
}

torch::Tensor overlap_loss(const torch::Tensor& geoms, const torch::Tensor& mask) {
  auto g = geoms;
  auto b = prepare(g, 1, mask);
  auto inter = pairwise_intersection(g);  // [B,N,N]
  auto area = torch::clamp_min(g.select(-1, 2) * g.select(-1, 3), kAreaFloor);
  auto ratio = inter / area.unsqueeze(2) * pair_mask(b.mask);
  return finish(b, ratio.sum({1, 2}));
}

torch::Tensor alignment_loss(const torch::Tensor& geoms, const torch::Tensor& mask) {
  auto g = geoms;
  auto b = prepare(g, 1, mask);
  const auto e = derive_corners(g);
  auto coords = torch::stack({e.xl, e.xc, e.xr, e.yt, e.yc, e.yb}, -1);  // [B,N,6]
  auto gaps = torch::abs(coords.unsqueeze(2) - coords.unsqueeze(1));   // [B,N,N,6]
  auto neighbours = pair_mask(b.mask).unsqueeze(-1) > 0;
  gaps = torch::where(neighbours, gaps, torch::full_like(gaps, 2.0));
  auto nearest = std::get<0>(gaps.min(2));                                     // [B,N,6]
  auto cost = -torch::log1p(-torch::clamp(nearest, 0.0, kAlignmentGapClamp));  // g(Δ)
  auto best = std::get<0>(cost.min(-1));                                       // [B,N]
  auto has_pair = (b.mask.sum(1) >= 2).to(g.scalar_type());
  return finish(b, (best * b.mask).sum(1) * has_pair);
}

torch::Tensor order_loss(const torch::Tensor& orders, const torch::Tensor& distances,
                         const torch::Tensor& mask) {
  if (!orders.sizes().equals(distances.sizes())) throw ValidationError("orders and distances differ in shape");
  auto d = distances.unsqueeze(-1);
  auto b = prepare(d, 1, mask);
  d = d.squeeze(-1);
  auto o = (b.single ? orders.unsqueeze(0) : orders).to(torch::kInt64);

  auto o_cpu = o.contiguous();
  auto m_cpu = b.mask.to(torch::kFloat64).contiguous();
  auto oa = o_cpu.accessor<int64_t, 2>();
  auto ma = m_cpu.accessor<double, 2>();
  for (int64_t i = 0; i < o_cpu.size(0); ++i) {
    std::vector<int> ranks;
    for (int64_t j = 0; j < o_cpu.size(1); ++j) {
      if (ma[i][j] > 0) ranks.push_back(static_cast<int>(oa[i][j]));
    }
    if (!is_permutation_of_range(ranks))
      throw ValidationError("reading orders of layout " + std::to_string(i) + " are not a permutation");
  }

  auto before = (o.unsqueeze(2) < o.unsqueeze(1)).to(d.scalar_type()) * pair_mask(b.mask);
  auto hinge = torch::relu(d.unsqueeze(2) - d.unsqueeze(1));
  // Summed sequentially in (i, j) order so the value is independent of
  // vectorized reduction blocking.
  auto terms = (before * hinge).flatten(1);
  return finish(b, terms.cumsum(1).select(1, terms.size(1) - 1));
}

torch::Tensor class_area_totals(const torch::Tensor& class_probs, const torch::Tensor& areas,
                                const torch::Tensor& mask) {
  auto p = class_probs;
  auto b = prepare(p, 1, mask);
  auto s = b.single ? areas.unsqueeze(0) : areas;
  if (!s.sizes().equals(p.sizes().slice(0, 2)))
    throw ValidationError("areas must have one entry per element");
  auto weighted = p * (s * b.mask).unsqueeze(-1);
  return finish(b, weighted.sum(1));
}

torch::Tensor generator_adversarial_loss(const torch::Tensor& p_global, const torch::Tensor& p_local) {
  auto lg = -torch::log(torch::clamp(p_global, kProbabilityEpsilon, 1 - kProbabilityEpsilon));
  if (!p_local.defined()) return lg;
  return lg - torch::log(torch::clamp(p_local, kProbabilityEpsilon, 1 - kProbabilityEpsilon));
}

torch::Tensor neg_log_sigmoid(const torch::Tensor& logit) {
  static const double cap = -std::log(kProbabilityEpsilon);
  return torch::clamp(torch::softplus(-logit), -std::log(1 - kProbabilityEpsilon), cap);
}

torch::Tensor neg_log_one_minus_sigmoid(const torch::Tensor& logit) {
  static const double cap = -std::log(kProbabilityEpsilon);
  return torch::clamp(torch::softplus(logit), -std::log(1 - kProbabilityEpsilon), cap);
}

torch::Tensor discriminator_loss(const torch::Tensor& d_real_global, const torch::Tensor& d_fake_global,
                                 const torch::Tensor& d_real_local, const torch::Tensor& d_fake_local,
                                 const torch::Tensor& s_pred, const torch::Tensor& s_real, double w_r) {
  if (!s_pred.sizes().equals(s_real.sizes())) throw ValidationError("area vectors differ in length");
  auto nlog = [](const torch::Tensor& p) {
    return -torch::log(torch::clamp(p, kProbabilityEpsilon, 1 - kProbabilityEpsilon));
  };
  auto adv = nlog(d_real_global) + nlog(1 - d_fake_global);
  if (d_real_local.defined()) adv = adv + nlog(d_real_local) + nlog(1 - d_fake_local);
  auto rec = torch::abs(s_real - s_pred).sum(-1);
  return adv + w_r * rec;
}

torch::Tensor generator_total_loss(const LossComponents& c, const LossWeights& w) {
  torch::Tensor total;
  auto add = [&](const torch::Tensor& term, double weight) {
    if (!term.defined()) return;
    auto scaled = weight * term;
    total = total.defined() ? total + scaled : scaled;
  };
  add(c.adversarial, w.w_adv);
  add(c.area, w.w_area);
  add(c.overlap, w.w_over);
  add(c.alignment, w.w_alg);
  add(c.order, w.w_ord);
  return total.defined() ? total : torch::zeros({});
}

double generator_total_loss(double adv, double area, double overlap, double alignment,
                            double order, const LossWeights& w) {
  return w.w_adv * adv + w.w_area * area + w.w_over * overlap + w.w_alg * alignment + w.w_ord * order;
}

namespace {

torch::Tensor geoms_tensor(std::span<const Geometry> geoms) {
  auto t = torch::empty({static_cast<int64_t>(geoms.size()), 4}, torch::kFloat64);
  auto a = t.accessor<double, 2>();
  for (std::size_t i = 0; i < geoms.size(); ++i) {
    const auto ii = static_cast<int64_t>(i);
    a[ii][0] = geoms[i].xc;
    a[ii][1] = geoms[i].yc;
    a[ii][2] = geoms[i].w;
    a[ii][3] = geoms[i].h;
  }
  return t;
}

torch::Tensor doubles(std::span<const double> v) {
  return torch::tensor(std::vector<double>(v.begin(), v.end()), torch::kFloat64);
}

}  // namespace

double overlap_loss(std::span<const Geometry> geoms) {
  if (geoms.empty()) return 0.0;
  return overlap_loss(geoms_tensor(geoms)).item<double>();
}

double alignment_loss(std::span<const Geometry> geoms) {
  if (geoms.empty()) return 0.0;
  return alignment_loss(geoms_tensor(geoms)).item<double>();
}

double order_loss(std::span<const int> orders, std::span<const double> distances) {
  if (orders.size() != distances.size()) throw ValidationError("orders and distances differ in length");
  if (orders.empty()) return 0.0;
  auto o = torch::tensor(std::vector<int64_t>(orders.begin(), orders.end()), torch::kInt64);
  return order_loss(o, doubles(distances)).item<double>();
}

double margin_area_loss(std::span<const double> s_pred, std::span<const double> s_target, double alpha) {
  if (s_pred.size() != s_target.size()) throw ValidationError("area vectors differ in length");
  if (s_pred.empty()) return 0.0;
  return margin_area_loss(doubles(s_pred), doubles(s_target), alpha).item<double>();
}

}  // namespace layoutforge
