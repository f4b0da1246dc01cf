#include "layoutforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace layoutforge {

ParseError::ParseError(std::string path, const std::string& message)
    : ValidationError(path + ": " + message), path_(std::move(path)), message_(message) {}

std::vector<ClassSizeModel> CorpusConfig::default_class_sizes() {
  return {
      // logo: small, physical aspect between wide banner and square
      ClassSizeModel{0.008, 0.03, 0.3, 1.0, 0.0, 0.0},
      // product_image
      ClassSizeModel{0.05, 0.16, 0.6, 1.4, 0.0, 0.0},
      // headline
      ClassSizeModel{0.025, 0.07, 0.0, 0.0, 0.55, 0.9},
      // button
      ClassSizeModel{0.008, 0.02, 0.0, 0.0, 0.2, 0.4},
      // offer
      ClassSizeModel{0.012, 0.04, 0.0, 0.0, 0.4, 0.8},
      // disclaimer
      ClassSizeModel{0.004, 0.012, 0.0, 0.0, 0.5, 0.9},
  };
}

void CorpusConfig::validate(const ClassRegistry& classes) const {
  if (size < 1) throw ValidationError("corpus size must be >= 1");
  if (aspect_mix.empty()) throw ValidationError("aspect mix must not be empty");
  double mix = 0.0;
  for (const auto& [aspect, weight] : aspect_mix) {
    if (!(weight >= 0.0)) throw ValidationError("aspect mix weights must be >= 0");
    mix += weight;
  }
  if (!(mix > 0.0)) throw ValidationError("aspect mix weights must not all be zero");
  if (count_weights.size() != static_cast<std::size_t>(kMaxElements - kMinElements + 1))
    throw ValidationError("count_weights needs one weight per element count 2..6");
  double counts = 0.0;
  for (double w : count_weights) {
    if (!(w >= 0.0)) throw ValidationError("count weights must be >= 0");
    counts += w;
  }
  if (!(counts > 0.0)) throw ValidationError("count weights must not all be zero");
  if (static_cast<int>(class_sizes.size()) != classes.size())
    throw ValidationError("class_sizes needs one entry per element class");
  for (const auto& s : class_sizes) {
    if (!(s.area_min > 0.0 && s.area_max >= s.area_min))
      throw ValidationError("class area ranges must satisfy 0 < min <= max");
  }
  for (int c : ratio_fixed_classes) {
    const auto& s = class_sizes.at(static_cast<std::size_t>(c));
    if (!(s.ratio_min > 0.0 && s.ratio_max >= s.ratio_min))
      throw ValidationError("ratio-fixed classes need 0 < ratio_min <= ratio_max");
  }
  for (int c = 0; c < classes.size(); ++c) {
    if (ratio_fixed_classes.count(c)) continue;
    const auto& s = class_sizes[static_cast<std::size_t>(c)];
    if (!(s.width_min > 0.0 && s.width_max >= s.width_min && s.width_max <= 1.0))
      throw ValidationError("free-aspect classes need 0 < width_min <= width_max <= 1");
  }
  if (static_cast<int>(stack_order.size()) != classes.size())
    throw ValidationError("stack_order must list every class once");
  if (!(left_align_fraction >= 0.0 && left_align_fraction <= 1.0))
    throw ValidationError("left_align_fraction must lie in [0,1]");
  if (!(margin >= 0.0 && margin < 0.25)) throw ValidationError("margin must lie in [0, 0.25)");
  if (static_cast<int>(always_include.size()) > kMinElements)
    throw ValidationError("too many always-included classes");
  if (max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
}

Canvas default_canvas(AspectClass aspect) {
  switch (aspect) {
    case AspectClass::portrait: return Canvas{300, 600, AspectClass::portrait};
    case AspectClass::landscape: return Canvas{600, 300, AspectClass::landscape};
    case AspectClass::square: break;
  }
  return Canvas{500, 500, AspectClass::square};
}

namespace {

constexpr double kQuantum = 1.0 / 1024.0;

double quantize(double v) { return std::max(kQuantum, std::round(v / kQuantum) * kQuantum); }
double quantize_down(double v) { return std::max(0.0, std::floor(v / kQuantum) * kQuantum); }

struct Box {
  int cls;
  double w, h;
};

std::optional<Layout> try_generate(const CorpusConfig& config, const ClassRegistry& classes,
                                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  // Canvas
  std::vector<AspectClass> aspects;
  std::vector<double> aspect_weights;
  for (const auto& [a, w] : config.aspect_mix) {
    aspects.push_back(a);
    aspect_weights.push_back(w);
  }
  std::discrete_distribution<int> pick_aspect(aspect_weights.begin(), aspect_weights.end());
  const Canvas canvas = default_canvas(aspects[static_cast<std::size_t>(pick_aspect(rng))]);
  const double canvas_ratio = static_cast<double>(canvas.width_px) / canvas.height_px;

  // Classes
  std::discrete_distribution<int> pick_count(config.count_weights.begin(), config.count_weights.end());
  const int n = kMinElements + pick_count(rng);
  std::vector<int> chosen = config.always_include;
  std::vector<int> pool;
  for (int c = 0; c < classes.size(); ++c) {
    if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) pool.push_back(c);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t i = 0; static_cast<int>(chosen.size()) < n && i < pool.size(); ++i) chosen.push_back(pool[i]);
  if (static_cast<int>(chosen.size()) < n) return std::nullopt;
  std::sort(chosen.begin(), chosen.end(), [&](int a, int b) {
    auto pos = [&](int c) { return std::find(config.stack_order.begin(), config.stack_order.end(), c); };
    return pos(a) < pos(b);
  });

  // Sizes
  std::vector<Box> boxes;
  const double usable = 1.0 - 2 * config.margin;
  double total_h = 0.0;
  double max_w = 0.0;
  for (int c : chosen) {
    const auto& model = config.class_sizes[static_cast<std::size_t>(c)];
    const double s = std::exp(uniform(std::log(model.area_min), std::log(model.area_max)));
    double w, h;
    if (config.ratio_fixed_classes.count(c)) {
      const double r = uniform(model.ratio_min, model.ratio_max) * canvas_ratio;
      w = std::sqrt(s / r);
      h = r * w;
    } else {
      w = uniform(model.width_min, model.width_max);
      h = s / w;
    }
    w = quantize(w);
    h = quantize(h);
    if (w > usable) return std::nullopt;
    boxes.push_back({c, w, h});
    total_h += h;
    max_w = std::max(max_w, w);
  }
  if (total_h > usable) return std::nullopt;

  // Vertical placement: margins plus randomly split slack.
  const double slack = usable - total_h;
  std::vector<double> parts(static_cast<std::size_t>(n + 1));
  for (auto& p : parts) p = uniform(0.5, 1.5);
  const double part_sum = std::accumulate(parts.begin(), parts.end(), 0.0);
  std::vector<double> y_top(static_cast<std::size_t>(n));
  double y = quantize_down(config.margin + slack * parts[0] / part_sum);
  for (int i = 0; i < n; ++i) {
    y_top[static_cast<std::size_t>(i)] = y;
    y += boxes[static_cast<std::size_t>(i)].h + quantize_down(slack * parts[static_cast<std::size_t>(i + 1)] / part_sum);
  }
  if (y > 1.0) return std::nullopt;

  // Horizontal alignment: shared left edge or shared center.
  const bool left = unit(rng) < config.left_align_fraction;
  double x_left = 0.0;
  if (left) {
    const double hi = std::min(3 * config.margin, 1.0 - config.margin - max_w);
    x_left = quantize_down(uniform(config.margin, std::max(config.margin, hi)));
    if (x_left + max_w > 1.0) return std::nullopt;
  }

  Layout layout;
  layout.canvas = canvas;
  for (int i = 0; i < n; ++i) {
    const Box& b = boxes[static_cast<std::size_t>(i)];
    const double xl = left ? x_left : 0.5 - b.w / 2;
    const double yt = y_top[static_cast<std::size_t>(i)];
    layout.elements.push_back(
        Element::of_class(b.cls, classes.size(), Geometry{xl + b.w / 2, yt + b.h / 2, b.w, b.h}));
  }
  return annotate(std::move(layout), config.ratio_fixed_classes);
}

}  // namespace

std::vector<Layout> generate_synthetic_corpus(const CorpusConfig& config, const ClassRegistry& classes) {
  config.validate(classes);
  std::vector<Layout> corpus;
  corpus.reserve(static_cast<std::size_t>(config.size));
  for (int i = 0; i < config.size; ++i) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(i)));
    std::optional<Layout> layout;
    for (int attempt = 0; attempt < config.max_attempts && !layout; ++attempt) {
      layout = try_generate(config, classes, rng);
    }
    if (!layout) {
      throw GenerationError("layout " + std::to_string(i) + ": element sizes do not fit the canvas after " +
                            std::to_string(config.max_attempts) + " attempts");
    }
    corpus.push_back(std::move(*layout));
  }
  return corpus;
}

std::vector<AttributeVector> extract_attributes(const Layout& layout, const std::set<int>& ratio_fixed_classes) {
  std::vector<AttributeVector> out;
  out.reserve(layout.elements.size());
  for (std::size_t i = 0; i < layout.elements.size(); ++i) {
    const Element& e = layout.elements[i];
    const Geometry& g = e.geometry;
    AttributeVector a;
    a.s = g.w * g.h;
    if (ratio_fixed_classes.count(e.class_id())) {
      if (!(g.w > 0.0))
        throw ValidationError("element " + std::to_string(i) + " is ratio-fixed but has zero width");
      a.r = g.h / g.w;
    }
    a.d = origin_distance(g);
    out.push_back(a);
  }
  return out;
}

Layout annotate(Layout layout, const std::set<int>& ratio_fixed_classes) {
  const auto attrs = extract_attributes(layout, ratio_fixed_classes);
  const auto orders = assign_reading_orders(layout);
  for (std::size_t i = 0; i < layout.elements.size(); ++i) {
    layout.elements[i].attributes = attrs[i];
    layout.elements[i].order = orders[i];
  }
  return layout;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json canvas_to_json(const Canvas& canvas) {
  return nlohmann::json{{"width_px", canvas.width_px},
                        {"height_px", canvas.height_px},
                        {"aspect_class", std::string(to_string(canvas.aspect_class))}};
}

namespace {

const nlohmann::json& require(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "/" + key, "missing required field '" + key + "'");
  return *it;
}

double number(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path, "expected a number");
  return v.get<double>();
}

int integer(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ParseError(path, "expected an integer");
  return v.get<int>();
}

const std::set<std::string> kElementKeys{"class", "xC", "yC", "w", "h", "attributes", "order", "frozen", "class_probs"};
const std::set<std::string> kLayoutKeys{"canvas", "elements"};

}  // namespace

Canvas canvas_from_json(const nlohmann::json& doc, const std::string& path) {
  Canvas c;
  c.width_px = integer(require(doc, "width_px", path), path + "/width_px");
  c.height_px = integer(require(doc, "height_px", path), path + "/height_px");
  if (c.width_px < 8 || c.height_px < 8) throw ParseError(path, "canvas sides must be at least 8 px");
  c.aspect_class = classify_aspect(c.width_px, c.height_px);
  if (doc.contains("aspect_class")) {
    const auto& a = doc["aspect_class"];
    if (!a.is_string()) throw ParseError(path + "/aspect_class", "expected a string");
    AspectClass stated;
    try {
      stated = aspect_class_from_string(a.get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError(path + "/aspect_class", e.what());
    }
    if (stated != c.aspect_class)
      throw ParseError(path + "/aspect_class", "'" + a.get<std::string>() + "' does not match a " +
                                                   std::to_string(c.width_px) + "x" + std::to_string(c.height_px) +
                                                   " canvas");
  }
  return c;
}

nlohmann::json layout_to_json(const Layout& layout, const ClassRegistry& classes) {
  nlohmann::json doc = layout.extra.is_object() ? layout.extra : nlohmann::json::object();
  doc["canvas"] = canvas_to_json(layout.canvas);
  auto elements = nlohmann::json::array();
  for (const auto& e : layout.elements) {
    nlohmann::json j = e.extra.is_object() ? e.extra : nlohmann::json::object();
    const int cls = e.class_id();
    j["class"] = classes.name(cls);
    j["xC"] = e.geometry.xc;
    j["yC"] = e.geometry.yc;
    j["w"] = e.geometry.w;
    j["h"] = e.geometry.h;
    j["attributes"] = {{"s", e.attributes.s}, {"r", e.attributes.r}, {"d", e.attributes.d}};
    if (e.order) j["order"] = *e.order;
    if (e.frozen) j["frozen"] = true;
    bool one_hot = true;
    for (std::size_t c = 0; c < e.class_probs.size(); ++c) {
      if (e.class_probs[c] != (static_cast<int>(c) == cls ? 1.0 : 0.0)) one_hot = false;
    }
    if (!one_hot) j["class_probs"] = e.class_probs;
    elements.push_back(std::move(j));
  }
  doc["elements"] = std::move(elements);
  return doc;
}

Layout layout_from_json(const nlohmann::json& doc, const ClassRegistry& classes) {
  if (!doc.is_object()) throw ParseError("", "layout document must be an object");
  Layout layout;
  layout.canvas = canvas_from_json(require(doc, "canvas", ""), "/canvas");
  const auto& elements = require(doc, "elements", "");
  if (!elements.is_array()) throw ParseError("/elements", "expected an array");
  for (const auto& [key, value] : doc.items()) {
    if (!kLayoutKeys.count(key)) layout.extra[key] = value;
  }

  bool any_missing_attributes = false;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const std::string path = "/elements/" + std::to_string(i);
    const auto& j = elements[i];
    if (!j.is_object()) throw ParseError(path, "expected an object");
    const auto& cls = require(j, "class", path);
    if (!cls.is_string()) throw ParseError(path + "/class", "expected a class name");
    auto id = classes.find(cls.get<std::string>());
    if (!id) throw ParseError(path + "/class", "unknown element class '" + cls.get<std::string>() + "'");

    Element e = Element::of_class(*id, classes.size(), {});
    e.geometry.xc = number(require(j, "xC", path), path + "/xC");
    e.geometry.yc = number(require(j, "yC", path), path + "/yC");
    e.geometry.w = number(require(j, "w", path), path + "/w");
    e.geometry.h = number(require(j, "h", path), path + "/h");
    if (j.contains("attributes")) {
      const auto& a = j["attributes"];
      const std::string ap = path + "/attributes";
      e.attributes.s = number(require(a, "s", ap), ap + "/s");
      e.attributes.r = number(require(a, "r", ap), ap + "/r");
      e.attributes.d = number(require(a, "d", ap), ap + "/d");
    } else {
      any_missing_attributes = true;
    }
    if (j.contains("order")) e.order = integer(j["order"], path + "/order");
    if (j.contains("frozen")) {
      if (!j["frozen"].is_boolean()) throw ParseError(path + "/frozen", "expected a boolean");
      e.frozen = j["frozen"].get<bool>();
    }
    if (j.contains("class_probs")) {
      const auto& p = j["class_probs"];
      if (!p.is_array() || static_cast<int>(p.size()) != classes.size())
        throw ParseError(path + "/class_probs", "expected " + std::to_string(classes.size()) + " probabilities");
      for (std::size_t c = 0; c < p.size(); ++c)
        e.class_probs[c] = number(p[c], path + "/class_probs/" + std::to_string(c));
    }
    for (const auto& [key, value] : j.items()) {
      if (!kElementKeys.count(key)) e.extra[key] = value;
    }
    layout.elements.push_back(std::move(e));
  }

  if (any_missing_attributes) {
    const auto attrs = extract_attributes(layout);
    for (std::size_t i = 0; i < layout.elements.size(); ++i) {
      if (!elements[i].contains("attributes")) layout.elements[i].attributes = attrs[i];
    }
  }
  return layout;
}

std::string write_layout(const Layout& layout, const ClassRegistry& classes) {
  return layout_to_json(layout, classes).dump(2);
}

Layout read_layout(const std::string& text, const ClassRegistry& classes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  return layout_from_json(doc, classes);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void save_layout(const std::filesystem::path& path, const Layout& layout, const ClassRegistry& classes) {
  write_file(path, write_layout(layout, classes) + "\n");
}

Layout load_layout(const std::filesystem::path& path, const ClassRegistry& classes) {
  return read_layout(read_file(path), classes);
}

void save_corpus(const std::filesystem::path& path, const std::vector<Layout>& layouts,
                 const ClassRegistry& classes) {
  nlohmann::json doc;
  doc["format"] = "layoutforge-corpus";
  doc["classes"] = classes.names();
  auto arr = nlohmann::json::array();
  for (const auto& l : layouts) arr.push_back(layout_to_json(l, classes));
  doc["layouts"] = std::move(arr);
  write_file(path, doc.dump() + "\n");
}

std::vector<Layout> load_corpus(const std::filesystem::path& path, const ClassRegistry& classes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  const nlohmann::json* arr = &doc;
  std::string prefix;
  if (doc.is_object()) {
    arr = &require(doc, "layouts", "");
    prefix = "/layouts";
  }
  if (!arr->is_array()) throw ParseError(prefix, "expected an array of layouts");
  std::vector<Layout> out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    try {
      out.push_back(layout_from_json((*arr)[i], classes));
    } catch (const ParseError& e) {
      throw ParseError(prefix + "/" + std::to_string(i) + e.path(), e.message());
    }
  }
  return out;
}

std::pair<std::vector<Layout>, std::vector<Layout>> split_corpus(const std::vector<Layout>& layouts,
                                                                 double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ValidationError("holdout fraction must lie in [0,1)");
  std::vector<std::size_t> index(layouts.size());
  std::iota(index.begin(), index.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(index.begin(), index.end(), rng);
  std::size_t held = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(layouts.size())));
  if (holdout_fraction > 0.0 && held == 0 && layouts.size() > 1) held = 1;
  std::pair<std::vector<Layout>, std::vector<Layout>> out;
  for (std::size_t k = 0; k < index.size(); ++k) {
    (k < held ? out.second : out.first).push_back(layouts[index[k]]);
  }
  return out;
}

}  // namespace layoutforge
