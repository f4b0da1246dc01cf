#include "layoutforge/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace layoutforge {

ClassRegistry::ClassRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ValidationError("class registry needs at least one class");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    for (std::size_t j = i + 1; j < names_.size(); ++j) {
      if (names_[i] == names_[j]) throw ValidationError("duplicate class name '" + names_[i] + "'");
    }
  }
}

const ClassRegistry& ClassRegistry::defaults() {
  static const ClassRegistry registry(
      {"logo", "product_image", "headline", "button", "offer", "disclaimer"});
  return registry;
}

const std::string& ClassRegistry::name(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("class id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

std::optional<int> ClassRegistry::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[static_cast<std::size_t>(i)] == name) return i;
  }
  return std::nullopt;
}

int ClassRegistry::id(std::string_view name) const {
  if (auto found = find(name)) return *found;
  throw ValidationError("unknown element class '" + std::string(name) + "'");
}

std::string_view to_string(AspectClass aspect) {
  switch (aspect) {
    case AspectClass::portrait: return "portrait";
    case AspectClass::square: return "square";
    case AspectClass::landscape: return "landscape";
  }
  return "square";
}

AspectClass aspect_class_from_string(std::string_view text) {
  if (text == "portrait") return AspectClass::portrait;
  if (text == "square") return AspectClass::square;
  if (text == "landscape") return AspectClass::landscape;
  throw ValidationError("unknown aspect class '" + std::string(text) + "'");
}

AspectClass classify_aspect(int width_px, int height_px) {
  if (width_px <= 0 || height_px <= 0) throw ValidationError("canvas dimensions must be positive");
  const double ratio = static_cast<double>(width_px) / height_px;
  if (std::abs(ratio - 1.0) <= 0.05) return AspectClass::square;
  return ratio < 1.0 ? AspectClass::portrait : AspectClass::landscape;
}

Canvas Canvas::from_size(int width_px, int height_px) {
  if (width_px < 8 || height_px < 8) throw ValidationError("canvas sides must be at least 8 px");
  return Canvas{width_px, height_px, classify_aspect(width_px, height_px)};
}

Element Element::of_class(int class_id, int num_classes, const Geometry& geometry) {
  if (class_id < 0 || class_id >= num_classes) throw ValidationError("class id out of range");
  Element e;
  e.class_probs.assign(static_cast<std::size_t>(num_classes), 0.0);
  e.class_probs[static_cast<std::size_t>(class_id)] = 1.0;
  e.geometry = geometry;
  return e;
}

int Element::class_id() const {
  if (class_probs.empty()) throw ValidationError("element has no class probabilities");
  return static_cast<int>(std::max_element(class_probs.begin(), class_probs.end()) -
                          class_probs.begin());
}

namespace {

bool finite(const Geometry& g) {
  return std::isfinite(g.xc) && std::isfinite(g.yc) && std::isfinite(g.w) && std::isfinite(g.h);
}

}  // namespace

Corners derive_corners(const Geometry& g) {
  if (!finite(g)) throw ValidationError("geometry has non-finite fields");
  return Corners{g.xc - g.w / 2, g.yc - g.h / 2, g.xc, g.yc, g.xc + g.w / 2, g.yc + g.h / 2};
}

Geometry geometry_from_edges(double xl, double yt, double xr, double yb) {
  return Geometry{(xl + xr) / 2, (yt + yb) / 2, xr - xl, yb - yt};
}

double origin_distance(const Geometry& g) {
  const Corners c = derive_corners(g);
  return std::hypot(c.xl, c.yt);
}

std::vector<int> assign_reading_orders(std::span<const double> distances) {
  std::vector<int> index(distances.size());
  std::iota(index.begin(), index.end(), 0);
  std::stable_sort(index.begin(), index.end(), [&](int a, int b) {
    return distances[static_cast<std::size_t>(a)] < distances[static_cast<std::size_t>(b)];
  });
  std::vector<int> orders(distances.size());
  for (std::size_t rank = 0; rank < index.size(); ++rank) {
    orders[static_cast<std::size_t>(index[rank])] = static_cast<int>(rank);
  }
  return orders;
}

std::vector<int> assign_reading_orders(const Layout& layout) {
  std::vector<double> distances;
  distances.reserve(layout.elements.size());
  for (const auto& e : layout.elements) distances.push_back(origin_distance(e.geometry));
  return assign_reading_orders(distances);
}

double apply_aspect_constraint(double w_pred, double h_pred, double r) {
  if (!(r >= 0.0)) throw ValidationError("aspect ratio must be non-negative");
  return (r == 0.0 ? h_pred : 0.0) + r * w_pred;
}

double intersection_area(const Geometry& a, const Geometry& b) {
  auto overlap = [](double c1, double w1, double c2, double w2) {
    return std::max(0.0, std::min({w1, w2, (w1 + w2) / 2 - std::abs(c1 - c2)}));
  };
  return overlap(a.xc, a.w, b.xc, b.w) * overlap(a.yc, a.h, b.yc, b.h);
}

bool is_permutation_of_range(std::span<const int> values) {
  std::vector<bool> seen(values.size(), false);
  for (int v : values) {
    if (v < 0 || static_cast<std::size_t>(v) >= values.size() || seen[static_cast<std::size_t>(v)])
      return false;
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

std::vector<Violation> validate_layout(const Layout& layout, const ClassRegistry& classes) {
  std::vector<Violation> out;
  auto add = [&](int element, std::string invariant, std::string message) {
    out.push_back(Violation{element, std::move(invariant), std::move(message)});
  };

  const Canvas& canvas = layout.canvas;
  if (canvas.width_px < 8 || canvas.height_px < 8) {
    add(-1, "canvas_size", "canvas dimensions must be at least 8 px");
  } else if (classify_aspect(canvas.width_px, canvas.height_px) != canvas.aspect_class) {
    add(-1, "canvas_aspect", "aspect class '" + std::string(to_string(canvas.aspect_class)) +
                                 "' does not match " + std::to_string(canvas.width_px) + "x" +
                                 std::to_string(canvas.height_px));
  }

  const int n = layout.size();
  if (n < kMinElements || n > kMaxElements) {
    add(-1, "element_count", "layout has " + std::to_string(n) + " elements, expected " +
                                 std::to_string(kMinElements) + ".." + std::to_string(kMaxElements));
  }

  constexpr double kTol = 1e-9;
  int with_order = 0;
  for (int i = 0; i < n; ++i) {
    const Element& e = layout.elements[static_cast<std::size_t>(i)];
    if (static_cast<int>(e.class_probs.size()) != classes.size()) {
      add(i, "class_probs_size", "expected " + std::to_string(classes.size()) + " class probabilities");
    } else {
      double sum = 0.0;
      bool negative = false;
      for (double p : e.class_probs) {
        if (!(p >= 0.0)) negative = true;
        sum += p;
      }
      if (negative) add(i, "class_probs_nonnegative", "class probabilities must be >= 0");
      if (!(std::abs(sum - 1.0) <= 1e-6)) {
        std::ostringstream msg;
        msg << "class probabilities sum to " << sum << ", expected normalization to 1";
        add(i, "class_probs_normalized", msg.str());
      }
    }

    const Geometry& g = e.geometry;
    if (!finite(g)) {
      add(i, "geometry_finite", "geometry has non-finite fields");
    } else {
      if (g.w < 0.0 || g.h < 0.0) add(i, "geometry_size", "width and height must be >= 0");
      const Corners c = derive_corners(g);
      if (c.xl < -kTol || c.yt < -kTol || c.xr > 1.0 + kTol || c.yb > 1.0 + kTol)
        add(i, "geometry_bounds", "box extends outside the canvas");
      if (e.frozen && (g.xc < 0 || g.xc > 1 || g.yc < 0 || g.yc > 1 || g.w > 1 || g.h > 1))
        add(i, "frozen_bounds", "frozen geometry must lie in [0,1]");
    }

    const AttributeVector& a = e.attributes;
    if (!(a.s > 0.0) || !std::isfinite(a.s)) add(i, "attribute_area", "expected area s must be > 0");
    if (!(a.r >= 0.0) || !std::isfinite(a.r)) add(i, "attribute_ratio", "aspect ratio r must be >= 0");
    if (!(a.d >= 0.0) || !std::isfinite(a.d)) add(i, "attribute_distance", "distance d must be >= 0");
    if (e.order) ++with_order;
  }

  if (with_order > 0) {
    if (with_order != n) {
      add(-1, "orders_complete", "reading orders must be given for all elements or none");
    } else {
      std::vector<int> orders;
      for (const auto& e : layout.elements) orders.push_back(*e.order);
      if (!is_permutation_of_range(orders))
        add(-1, "orders_permutation", "reading orders must form a permutation of 0..N-1");
    }
  }
  return out;
}

void require_valid(const Layout& layout, const ClassRegistry& classes) {
  const auto violations = validate_layout(layout, classes);
  if (violations.empty()) return;
  std::ostringstream msg;
  msg << "invalid layout:";
  for (const auto& v : violations) {
    msg << " [" << (v.element >= 0 ? "element " + std::to_string(v.element) : std::string("layout"))
        << ": " << v.invariant << ": " << v.message << "]";
  }
  throw ValidationError(msg.str());
}

}  // namespace layoutforge
