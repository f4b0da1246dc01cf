#pragma once

#include <span>

#include <json.hpp>
#include <torch/torch.h>

#include "layoutforge/core.hpp"

namespace layoutforge {

/// Clamp applied to probabilities inside every log term.
inline constexpr double kProbabilityEpsilon = 1e-7;
/// Upper clamp of alignment gaps fed to -log(1 - x).
inline constexpr double kAlignmentGapClamp = 1.0 - 1e-6;
/// Floor of box areas used as overlap denominators.
inline constexpr double kAreaFloor = 1e-6;

struct LossWeights {
  double w_adv = 0.6;
  double w_area = 4.0;
  double w_over = 8.0;
  double w_alg = 20.0;
  double w_ord = 20.0;
  double w_r = 0.5;  // discriminator attribute reconstruction

  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

// All batched losses take [B,N,...] inputs plus an optional [B,N] element
// mask (1 = real element) and return one value per layout, shape [B].
// Unbatched [N,...] inputs return a scalar tensor.

/// sum_i max(0, |s'_i - s_i| / s_i - alpha)
torch::Tensor margin_area_loss(const torch::Tensor& s_pred, const torch::Tensor& s_target,
                               double alpha, const torch::Tensor& mask = {});

/// sum_i sum_{j != i} |box_i ∩ box_j| / max(area_i, 1e-6)
torch::Tensor overlap_loss(const torch::Tensor& geoms, const torch::Tensor& mask = {});

/// sum_i min over {L, xC, R, T, yC, B} of -log(1 - Δ), Δ = nearest-neighbour
/// gap of that coordinate. Zero for layouts with fewer than two elements.
torch::Tensor alignment_loss(const torch::Tensor& geoms, const torch::Tensor& mask = {});

/// sum_i sum_j 1[o_i < o_j] max(0, d_i - d_j). Orders must be a permutation
/// of 0..n-1 over the real elements of each layout.
torch::Tensor order_loss(const torch::Tensor& orders, const torch::Tensor& distances,
                         const torch::Tensor& mask = {});

/// S_c = sum_i p_ic s_i; shape [B,M] (or [M] unbatched).
torch::Tensor class_area_totals(const torch::Tensor& class_probs, const torch::Tensor& areas,
                                const torch::Tensor& mask = {});

/// -log p_global - log p_local, probabilities clamped to [eps, 1 - eps].
torch::Tensor generator_adversarial_loss(const torch::Tensor& p_global, const torch::Tensor& p_local);

/// -log clamp(sigmoid(z)) computed stably from the logit.
torch::Tensor neg_log_sigmoid(const torch::Tensor& logit);
/// -log clamp(1 - sigmoid(z)) computed stably from the logit.
torch::Tensor neg_log_one_minus_sigmoid(const torch::Tensor& logit);

/// L_a + w_r * sum_c |S_c - S'_c|.
torch::Tensor discriminator_loss(const torch::Tensor& d_real_global, const torch::Tensor& d_fake_global,
                                 const torch::Tensor& d_real_local, const torch::Tensor& d_fake_local,
                                 const torch::Tensor& s_pred, const torch::Tensor& s_real, double w_r);

struct LossComponents {
  torch::Tensor adversarial;
  torch::Tensor area;
  torch::Tensor overlap;
  torch::Tensor alignment;
  torch::Tensor order;
};

/// Weighted sum; undefined components count as zero.
torch::Tensor generator_total_loss(const LossComponents& components, const LossWeights& weights);
double generator_total_loss(double adv, double area, double overlap, double alignment,
                            double order, const LossWeights& weights);

// Scalar conveniences on single layouts; these route through the tensor
// implementations above in double precision.
double overlap_loss(std::span<const Geometry> geoms);
double alignment_loss(std::span<const Geometry> geoms);
double order_loss(std::span<const int> orders, std::span<const double> distances);
double margin_area_loss(std::span<const double> s_pred, std::span<const double> s_target, double alpha);

}  // namespace layoutforge
