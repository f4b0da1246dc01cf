#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "layoutforge/core.hpp"
#include "layoutforge/losses.hpp"
#include "layoutforge/model.hpp"

namespace layoutforge {

/// One requested element: class plus attribute conditions.
struct ElementSpec {
  int class_id = 0;
  AttributeVector attributes;
  std::optional<int> order;
};

nlohmann::json element_spec_to_json(const ElementSpec& spec, const ClassRegistry& classes = ClassRegistry::defaults());
/// {"class", "attributes": {"s", "r", "d"?}, "order"?}
ElementSpec element_spec_from_json(const nlohmann::json& doc, const std::string& path = "",
                                   const ClassRegistry& classes = ClassRegistry::defaults());
/// Checks count (2..6), class ids and attribute ranges.
void validate_specs(std::span<const ElementSpec> specs, int num_classes);

struct ImageLocation {
  double xc = 0.5;
  double yc = 0.5;
  bool operator==(const ImageLocation&) const = default;
};

/// grid_n x grid_n centers spanning [w/2, 1-w/2] x [h/2, 1-h/2]; repeated
/// coordinates of a degenerate region are merged.
std::vector<ImageLocation> sample_image_locations(const Canvas& canvas, double image_w, double image_h,
                                                  int grid_n);

/// Width and height with w*h = s and h/w = r (square when r = 0).
Geometry product_image_size(const AttributeVector& attributes);

/// Translates each box inside [0,1]^2 without changing its size.
Layout fit_to_canvas(Layout layout);

struct Candidate {
  Layout layout;
  ImageLocation location;
  std::uint64_t seed = 0;
};

/// One layout per location with the product image frozen there.
std::vector<Candidate> generate_candidates(std::span<const ElementSpec> specs, const Canvas& canvas,
                                           const ModelCheckpoint& checkpoint,
                                           std::span<const ImageLocation> locations, std::uint64_t seed);

/// Spatially averaged last global conv activation for each layout, [K, C].
torch::Tensor extract_layout_features(std::span<const Layout> layouts, const ModelCheckpoint& checkpoint);
std::vector<double> extract_layout_features(const Layout& layout, const ModelCheckpoint& checkpoint);

struct CostTerms {
  double adversarial = 0.0;
  double overlap = 0.0;
  double alignment = 0.0;
  double total = 0.0;
};

/// E = w_adv L_adv + w_over L_over + w_alg L_alg for each layout. The local
/// branch sees a dropout rendering seeded by (seed, index).
std::vector<CostTerms> layout_costs(std::span<const Layout> layouts, const ModelCheckpoint& checkpoint,
                                    const LossWeights& weights, std::uint64_t seed);

enum class RankOrder { ascending, descending };
std::string_view to_string(RankOrder order);
RankOrder rank_order_from_string(std::string_view text);

/// Seeded k-means++ followed by a fixed number of Lloyd iterations.
/// Distance ties go to the lowest centroid index.
std::vector<int> kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                        int iterations = 100);

struct TsneOptions {
  double perplexity = 30.0;  // clipped to (count - 1) / 3 for small inputs
  int iterations = 1000;
  double learning_rate = 200.0;
};
/// Exact t-SNE to two dimensions.
std::vector<std::array<double, 2>> tsne_embed(const std::vector<std::vector<double>>& features,
                                              std::uint64_t seed, const TsneOptions& options = {});

struct RankedCandidate {
  Layout layout;
  ImageLocation location;
  std::uint64_t seed = 0;
  std::vector<double> features;
  int cluster = 0;
  CostTerms cost;
};

struct CandidateSet {
  std::vector<RankedCandidate> candidates;
  int k = 0;
  RankOrder order = RankOrder::ascending;
  std::uint64_t seed = 0;
  /// Candidate indices of each cluster in ranking order.
  std::vector<std::vector<int>> ranking;
  /// First-ranked candidate per cluster, -1 for an empty cluster.
  std::vector<int> recommended;
};

/// Clusters candidates on discriminator features and ranks each cluster by E.
CandidateSet group_and_rank(std::vector<Candidate> candidates, const ModelCheckpoint& checkpoint, int k,
                            std::uint64_t seed, const LossWeights& weights = {},
                            RankOrder order = RankOrder::ascending);

struct DesignRequest {
  Canvas canvas;
  std::vector<ElementSpec> elements;
  int k = 5;
  int grid_n = 8;
  std::uint64_t seed = 0;
  RankOrder order = RankOrder::ascending;
};

nlohmann::json design_request_to_json(const DesignRequest& request, const ClassRegistry& classes = ClassRegistry::defaults());
DesignRequest design_request_from_json(const nlohmann::json& doc, const ClassRegistry& classes = ClassRegistry::defaults());

/// Locations -> candidates -> clustering and ranking. k is reduced to the
/// candidate count when fewer locations exist.
CandidateSet run_design_pipeline(const DesignRequest& request, const ModelCheckpoint& checkpoint);

nlohmann::json candidate_set_to_json(const CandidateSet& set, const ClassRegistry& classes = ClassRegistry::defaults());

/// Retargets to a new canvas with the order-conditioned adjustment model,
/// preserving physical aspect ratios and source reading orders.
Layout retarget_layout(const Layout& source, const Canvas& target, const ModelCheckpoint& adjust_checkpoint,
                       std::uint64_t seed);

/// r scaled so the pixel aspect survives the canvas change.
double retarget_ratio(double r_source, const Canvas& source, const Canvas& target);

/// 6 slots of one-hot(class) followed by (s, r); elements sorted by class id then descending s.
std::vector<double> template_query_vector(std::span<const ElementSpec> specs, int num_classes);
std::vector<double> template_query_vector(const Layout& layout, int num_classes);

struct TemplateMatch {
  int index = -1;
  double similarity = 0.0;
};
/// Corpus layout with maximal cosine similarity; lowest index on ties.
TemplateMatch template_retrieve(std::span<const ElementSpec> query, std::span<const Layout> corpus,
                                int num_classes);

/// Scatter plot of a 2-D embedding coloured by cluster, recommended points ringed.
std::string cluster_plot_svg(const std::vector<std::array<double, 2>>& coords, const std::vector<int>& clusters,
                             const std::vector<int>& recommended);

}  // namespace layoutforge
