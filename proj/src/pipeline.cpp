#include "layoutforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "layoutforge/batch.hpp"
#include "layoutforge/data.hpp"
#include "layoutforge/render.hpp"
#include "layoutforge/training.hpp"

namespace layoutforge {

nlohmann::json element_spec_to_json(const ElementSpec& spec, const ClassRegistry& classes) {
  nlohmann::json j{{"class", classes.name(spec.class_id)},
                   {"attributes", {{"s", spec.attributes.s}, {"r", spec.attributes.r}, {"d", spec.attributes.d}}}};
  if (spec.order) j["order"] = *spec.order;
  return j;
}

ElementSpec element_spec_from_json(const nlohmann::json& doc, const std::string& path, const ClassRegistry& classes) {
  if (!doc.is_object()) throw ParseError(path, "expected an object");
  ElementSpec spec;
  auto cls = doc.find("class");
  if (cls == doc.end()) throw ParseError(path + "/class", "missing required field 'class'");
  if (!cls->is_string()) throw ParseError(path + "/class", "expected a class name");
  auto id = classes.find(cls->get<std::string>());
  if (!id) throw ParseError(path + "/class", "unknown element class '" + cls->get<std::string>() + "'");
  spec.class_id = *id;
  auto attrs = doc.find("attributes");
  if (attrs == doc.end()) throw ParseError(path + "/attributes", "missing required field 'attributes'");
  if (!attrs->is_object()) throw ParseError(path + "/attributes", "expected an object");
  auto read = [&](const char* key, bool required, double fallback) {
    auto it = attrs->find(key);
    const std::string p = path + "/attributes/" + key;
    if (it == attrs->end()) {
      if (required) throw ParseError(p, std::string("missing required field '") + key + "'");
      return fallback;
    }
    if (!it->is_number()) throw ParseError(p, "expected a number");
    return it->get<double>();
  };
  spec.attributes.s = read("s", true, 0.0);
  spec.attributes.r = read("r", false, 0.0);
  spec.attributes.d = read("d", false, 0.0);
  if (auto order = doc.find("order"); order != doc.end()) {
    if (!order->is_number_integer()) throw ParseError(path + "/order", "expected an integer");
    spec.order = order->get<int>();
  }
  return spec;
}

void validate_specs(std::span<const ElementSpec> specs, int num_classes) {
  const int n = static_cast<int>(specs.size());
  if (n < kMinElements || n > kMaxElements)
    throw ValidationError("a layout needs " + std::to_string(kMinElements) + " to " + std::to_string(kMaxElements) +
                          " elements, got " + std::to_string(n));
  std::vector<int> orders;
  for (int i = 0; i < n; ++i) {
    const auto& s = specs[i];
    const std::string where = "element " + std::to_string(i);
    if (s.class_id < 0 || s.class_id >= num_classes) throw ValidationError(where + ": class id out of range");
    if (!(s.attributes.s > 0.0 && s.attributes.s <= 1.0)) throw ValidationError(where + ": area must lie in (0,1]");
    if (!(s.attributes.r >= 0.0) || !std::isfinite(s.attributes.r))
      throw ValidationError(where + ": aspect ratio must be >= 0");
    if (!(s.attributes.d >= 0.0) || !std::isfinite(s.attributes.d))
      throw ValidationError(where + ": origin distance must be >= 0");
    if (s.order) orders.push_back(*s.order);
  }
  if (!orders.empty() && (static_cast<int>(orders.size()) != n || !is_permutation_of_range(orders)))
    throw ValidationError("element orders must be a permutation of 0..N-1");
}

std::vector<ImageLocation> sample_image_locations(const Canvas& canvas, double image_w, double image_h,
                                                  int grid_n) {
  if (canvas.width_px <= 0 || canvas.height_px <= 0) throw ValidationError("canvas must have a positive size");
  if (grid_n < 1) throw ValidationError("grid_n must be >= 1");
  if (!(image_w > 0.0) || !(image_h > 0.0)) throw ValidationError("image size must be positive");
  if (image_w > 1.0 || image_h > 1.0) throw ValidationError("product image does not fit inside the canvas");
  auto axis = [grid_n](double size) {
    const double lo = size / 2.0, hi = 1.0 - size / 2.0;
    std::vector<double> v;
    for (int i = 0; i < grid_n; ++i) {
      const double x = grid_n == 1 ? (lo + hi) / 2.0 : lo + (hi - lo) * i / (grid_n - 1);
      if (v.empty() || x != v.back()) v.push_back(x);
    }
    return v;
  };
  std::vector<ImageLocation> out;
  for (double y : axis(image_h))
    for (double x : axis(image_w)) out.push_back({x, y});
  return out;
}

Geometry product_image_size(const AttributeVector& a) {
  if (!(a.s > 0.0)) throw ValidationError("product image area must be positive");
  if (a.r < 0.0) throw ValidationError("product image aspect ratio must be >= 0");
  Geometry g;
  g.w = a.r > 0.0 ? std::sqrt(a.s / a.r) : std::sqrt(a.s);
  g.h = a.r > 0.0 ? a.r * g.w : g.w;
  return g;
}

Layout fit_to_canvas(Layout layout) {
  for (auto& e : layout.elements) {
    auto& g = e.geometry;
    g.w = std::clamp(g.w, 0.0, 1.0);
    g.h = std::clamp(g.h, 0.0, 1.0);
    g.xc = std::clamp(g.xc, g.w / 2.0, 1.0 - g.w / 2.0);
    g.yc = std::clamp(g.yc, g.h / 2.0, 1.0 - g.h / 2.0);
  }
  return layout;
}

namespace {

int num_classes_of(const ModelCheckpoint& checkpoint) { return checkpoint.generator_config.num_classes; }

void require_models(const ModelCheckpoint& checkpoint) {
  if (!checkpoint.generator || !checkpoint.discriminator) throw ValidationError("checkpoint has no model parameters");
}

Layout layout_from_specs(std::span<const ElementSpec> specs, const Canvas& canvas, int num_classes) {
  Layout layout;
  layout.canvas = canvas;
  for (const auto& s : specs) {
    Element e = Element::of_class(s.class_id, num_classes, Geometry{0.5, 0.5, 0.0, 0.0});
    e.attributes = s.attributes;
    e.order = s.order;
    layout.elements.push_back(std::move(e));
  }
  return layout;
}

/// Cost weights of the run that produced the checkpoint (defaults when absent).
LossWeights training_weights(const ModelCheckpoint& checkpoint) {
  const auto& t = checkpoint.training_config;
  if (t.is_object() && t.contains("weights")) return t["weights"].get<LossWeights>();
  return LossWeights{};
}

int find_product(std::span<const ElementSpec> specs) {
  for (size_t i = 0; i < specs.size(); ++i)
    if (specs[i].class_id == kProductImage) return static_cast<int>(i);
  throw ValidationError("element specs must include a product_image");
}

}  // namespace

std::vector<Candidate> generate_candidates(std::span<const ElementSpec> specs, const Canvas& canvas,
                                           const ModelCheckpoint& checkpoint,
                                           std::span<const ImageLocation> locations, std::uint64_t seed) {
  require_models(checkpoint);
  const int m = num_classes_of(checkpoint);
  validate_specs(specs, m);
  if (checkpoint.aspect_class != canvas.aspect_class)
    throw ValidationError("checkpoint was trained for " + std::string(to_string(checkpoint.aspect_class)) +
                          " canvases, request is " + std::string(to_string(canvas.aspect_class)));
  const int product = find_product(specs);
  const Geometry size = product_image_size(specs[product].attributes);
  Layout base = layout_from_specs(specs, canvas, m);
  ConditioningOptions options{checkpoint.order_conditioning, {}};

  Generator generator = checkpoint.generator;
  std::vector<Candidate> out;
  out.reserve(locations.size());
  for (size_t k = 0; k < locations.size(); ++k) {
    Layout layout = base;
    auto& p = layout.elements[product];
    p.frozen = true;
    p.geometry = Geometry{locations[k].xc, locations[k].yc, size.w, size.h};
    const std::uint64_t s = mix_seed(seed, k);
    auto generated = generate_from_conditions(generator, std::span<const Layout>(&layout, 1), options, s, m);
    out.push_back(Candidate{fit_to_canvas(std::move(generated.front())), locations[k], s});
  }
  return out;
}

torch::Tensor extract_layout_features(std::span<const Layout> layouts, const ModelCheckpoint& checkpoint) {
  require_models(checkpoint);
  const auto& d = checkpoint.discriminator_config;
  if (layouts.empty()) return torch::zeros({0, d.feature_dim()});
  auto batch = make_batch(layouts, num_classes_of(checkpoint));
  torch::NoGradGuard no_grad;
  auto image = compose_layout_image(batch.class_probs, batch.geoms, d.image_width, d.image_height, batch.mask);
  Discriminator disc = checkpoint.discriminator;
  return disc->pooled_features(image);
}

std::vector<double> extract_layout_features(const Layout& layout, const ModelCheckpoint& checkpoint) {
  auto f = extract_layout_features(std::span<const Layout>(&layout, 1), checkpoint).to(torch::kFloat64).contiguous();
  return std::vector<double>(f.data_ptr<double>(), f.data_ptr<double>() + f.numel());
}

std::vector<CostTerms> layout_costs(std::span<const Layout> layouts, const ModelCheckpoint& checkpoint,
                                    const LossWeights& weights, std::uint64_t seed) {
  require_models(checkpoint);
  weights.validate();
  std::vector<CostTerms> out;
  if (layouts.empty()) return out;
  const auto& d = checkpoint.discriminator_config;
  auto batch = make_batch(layouts, num_classes_of(checkpoint));
  torch::NoGradGuard no_grad;
  auto global = compose_layout_image(batch.class_probs, batch.geoms, d.image_width, d.image_height, batch.mask);
  torch::Tensor local;
  if (d.local_branch) {
    std::vector<torch::Tensor> masks;
    for (size_t i = 0; i < layouts.size(); ++i)
      masks.push_back(sample_dropout_masks(1, batch.slots(), d.dropout_b, mix_seed(seed, i)));
    local = compose_dropout_image(batch.class_probs, batch.geoms, torch::cat(masks, 0), d.image_width,
                                  d.image_height, batch.mask);
  }
  Discriminator disc = checkpoint.discriminator;
  auto dout = disc->forward(global, local);
  auto adv = neg_log_sigmoid(dout.logit_global);
  if (d.local_branch) adv = adv + neg_log_sigmoid(dout.logit_local);
  auto geoms64 = batch.geoms.to(torch::kFloat64);
  auto mask64 = batch.mask.to(torch::kFloat64);
  auto over = overlap_loss(geoms64, mask64);
  auto alg = alignment_loss(geoms64, mask64);
  for (size_t i = 0; i < layouts.size(); ++i) {
    CostTerms c;
    c.adversarial = adv[i].item<double>();
    c.overlap = over[i].item<double>();
    c.alignment = alg[i].item<double>();
    c.total = weights.w_adv * c.adversarial + weights.w_over * c.overlap + weights.w_alg * c.alignment;
    out.push_back(c);
  }
  return out;
}

std::string_view to_string(RankOrder order) { return order == RankOrder::ascending ? "asc" : "desc"; }

RankOrder rank_order_from_string(std::string_view text) {
  if (text == "asc" || text == "ascending") return RankOrder::ascending;
  if (text == "desc" || text == "descending") return RankOrder::descending;
  throw ValidationError("rank order must be 'asc' or 'desc', got '" + std::string(text) + "'");
}

CandidateSet group_and_rank(std::vector<Candidate> candidates, const ModelCheckpoint& checkpoint, int k,
                            std::uint64_t seed, const LossWeights& weights, RankOrder order) {
  const int n = static_cast<int>(candidates.size());
  if (k < 1) throw ValidationError("k must be >= 1");
  if (k > n)
    throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " candidates");
  std::vector<Layout> layouts;
  layouts.reserve(n);
  for (const auto& c : candidates) layouts.push_back(c.layout);

  auto features = extract_layout_features(layouts, checkpoint).to(torch::kFloat64).contiguous();
  const auto dim = features.size(1);
  std::vector<std::vector<double>> points(n);
  for (int i = 0; i < n; ++i) {
    const double* row = features.data_ptr<double>() + i * dim;
    points[i].assign(row, row + dim);
  }
  const auto costs = layout_costs(layouts, checkpoint, weights, mix_seed(seed, 0xc057));
  const auto labels = kmeans(points, k, mix_seed(seed, 0x6b6d));

  CandidateSet set;
  set.k = k;
  set.order = order;
  set.seed = seed;
  set.ranking.assign(k, {});
  set.recommended.assign(k, -1);
  for (int i = 0; i < n; ++i) {
    RankedCandidate rc;
    rc.layout = std::move(candidates[i].layout);
    rc.location = candidates[i].location;
    rc.seed = candidates[i].seed;
    rc.features = std::move(points[i]);
    rc.cluster = labels[i];
    rc.cost = costs[i];
    set.candidates.push_back(std::move(rc));
    set.ranking[labels[i]].push_back(i);
  }
  for (int c = 0; c < k; ++c) {
    auto& members = set.ranking[c];
    std::stable_sort(members.begin(), members.end(), [&](int a, int b) {
      const double ea = set.candidates[a].cost.total, eb = set.candidates[b].cost.total;
      return order == RankOrder::ascending ? ea < eb : ea > eb;
    });
    if (!members.empty()) set.recommended[c] = members.front();
  }
  return set;
}

nlohmann::json design_request_to_json(const DesignRequest& r, const ClassRegistry& classes) {
  auto elements = nlohmann::json::array();
  for (const auto& e : r.elements) elements.push_back(element_spec_to_json(e, classes));
  return nlohmann::json{{"canvas", canvas_to_json(r.canvas)},
                        {"elements", elements},
                        {"k", r.k},
                        {"grid_n", r.grid_n},
                        {"seed", r.seed},
                        {"rank_order", std::string(to_string(r.order))}};
}

DesignRequest design_request_from_json(const nlohmann::json& doc, const ClassRegistry& classes) {
  if (!doc.is_object()) throw ParseError("", "request must be an object");
  DesignRequest r;
  if (!doc.contains("canvas")) throw ParseError("/canvas", "missing required field 'canvas'");
  r.canvas = canvas_from_json(doc["canvas"], "/canvas");
  if (!doc.contains("elements") || !doc["elements"].is_array())
    throw ParseError("/elements", "expected an array of element specs");
  const auto& elements = doc["elements"];
  for (size_t i = 0; i < elements.size(); ++i)
    r.elements.push_back(element_spec_from_json(elements[i], "/elements/" + std::to_string(i), classes));
  auto integer = [&](const char* key, int fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_number_integer()) throw ParseError(std::string("/") + key, "expected an integer");
    return doc[key].get<int>();
  };
  r.k = integer("k", r.k);
  r.grid_n = integer("grid_n", r.grid_n);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw ParseError("/seed", "expected a non-negative integer");
    r.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("rank_order")) {
    if (!doc["rank_order"].is_string()) throw ParseError("/rank_order", "expected 'asc' or 'desc'");
    try {
      r.order = rank_order_from_string(doc["rank_order"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError("/rank_order", e.what());
    }
  }
  return r;
}

CandidateSet run_design_pipeline(const DesignRequest& request, const ModelCheckpoint& checkpoint) {
  validate_specs(request.elements, num_classes_of(checkpoint));
  if (request.k < 1) throw ValidationError("k must be >= 1");
  const int product = find_product(request.elements);
  const Geometry size = product_image_size(request.elements[product].attributes);
  const auto locations = sample_image_locations(request.canvas, size.w, size.h, request.grid_n);
  auto candidates = generate_candidates(request.elements, request.canvas, checkpoint, locations, request.seed);
  const int k = std::min<int>(request.k, static_cast<int>(candidates.size()));
  return group_and_rank(std::move(candidates), checkpoint, k, request.seed,
                        training_weights(checkpoint), request.order);
}

nlohmann::json candidate_set_to_json(const CandidateSet& set, const ClassRegistry& classes) {
  auto candidates = nlohmann::json::array();
  for (size_t i = 0; i < set.candidates.size(); ++i) {
    const auto& c = set.candidates[i];
    candidates.push_back({{"index", i},
                          {"layout", layout_to_json(c.layout, classes)},
                          {"location", {{"xC", c.location.xc}, {"yC", c.location.yc}}},
                          {"seed", c.seed},
                          {"cluster", c.cluster},
                          {"cost",
                           {{"total", c.cost.total},
                            {"adversarial", c.cost.adversarial},
                            {"overlap", c.cost.overlap},
                            {"alignment", c.cost.alignment}}},
                          {"features", c.features}});
  }
  return nlohmann::json{{"k", set.k},
                        {"seed", set.seed},
                        {"rank_order", std::string(to_string(set.order))},
                        {"candidates", candidates},
                        {"ranking", set.ranking},
                        {"recommended", set.recommended}};
}

double retarget_ratio(double r_source, const Canvas& source, const Canvas& target) {
  if (r_source < 0.0) throw ValidationError("aspect ratio must be >= 0");
  return r_source * (static_cast<double>(source.height_px) / source.width_px) *
         (static_cast<double>(target.width_px) / target.height_px);
}

Layout retarget_layout(const Layout& source, const Canvas& target, const ModelCheckpoint& adjust_checkpoint,
                       std::uint64_t seed) {
  require_models(adjust_checkpoint);
  if (!adjust_checkpoint.order_conditioning)
    throw ValidationError("retargeting needs an order-conditioned adjustment checkpoint");
  if (target.width_px < 8 || target.height_px < 8) throw ValidationError("target canvas is too small");
  require_valid(source);
  const int m = num_classes_of(adjust_checkpoint);
  const auto attrs = extract_attributes(source);
  const auto orders = assign_reading_orders(source);
  Layout input;
  input.canvas = target;
  input.extra = source.extra;
  for (size_t i = 0; i < source.elements.size(); ++i) {
    Element e = source.elements[i];
    if (static_cast<int>(e.class_probs.size()) != m)
      throw ValidationError("source layout class count does not match the checkpoint");
    e.frozen = false;
    e.attributes = attrs[i];
    e.attributes.r = retarget_ratio(attrs[i].r, source.canvas, target);
    e.order = orders[i];
    input.elements.push_back(std::move(e));
  }
  ConditioningOptions options{true, {}};
  Generator generator = adjust_checkpoint.generator;
  auto out = generate_from_conditions(generator, std::span<const Layout>(&input, 1), options, seed, m);
  Layout result = fit_to_canvas(std::move(out.front()));
  result.canvas = target;
  return result;
}

namespace {

struct Slot {
  int cls;
  double s, r;
};

std::vector<double> query_vector(std::vector<Slot> slots, int num_classes) {
  if (static_cast<int>(slots.size()) > kMaxElements)
    throw ValidationError("template queries hold at most " + std::to_string(kMaxElements) + " elements");
  std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return a.cls != b.cls ? a.cls < b.cls : a.s > b.s;
  });
  const int width = num_classes + 2;
  std::vector<double> v(static_cast<size_t>(kMaxElements) * width, 0.0);
  for (size_t i = 0; i < slots.size(); ++i) {
    v[i * width + slots[i].cls] = 1.0;
    v[i * width + num_classes] = slots[i].s;
    v[i * width + num_classes + 1] = slots[i].r;
  }
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<double> template_query_vector(std::span<const ElementSpec> specs, int num_classes) {
  std::vector<Slot> slots;
  for (const auto& s : specs) {
    if (s.class_id < 0 || s.class_id >= num_classes) throw ValidationError("class id out of range");
    slots.push_back({s.class_id, s.attributes.s, s.attributes.r});
  }
  return query_vector(std::move(slots), num_classes);
}

std::vector<double> template_query_vector(const Layout& layout, int num_classes) {
  std::vector<Slot> slots;
  for (const auto& e : layout.elements) slots.push_back({e.class_id(), e.attributes.s, e.attributes.r});
  return query_vector(std::move(slots), num_classes);
}

TemplateMatch template_retrieve(std::span<const ElementSpec> query, std::span<const Layout> corpus,
                                int num_classes) {
  if (corpus.empty()) throw ValidationError("template corpus is empty");
  const auto q = template_query_vector(query, num_classes);
  if (std::all_of(q.begin(), q.end(), [](double x) { return x == 0.0; }))
    throw ValidationError("template query vector is zero");
  TemplateMatch best;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const double sim = cosine(q, template_query_vector(corpus[i], num_classes));
    if (best.index < 0 || sim > best.similarity) best = {static_cast<int>(i), sim};
  }
  return best;
}

}  // namespace layoutforge
