#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace layoutforge {

/// Thrown when an input violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kMinElements = 2;
inline constexpr int kMaxElements = 6;

// Ids of the default element classes.
inline constexpr int kLogo = 0;
inline constexpr int kProductImage = 1;
inline constexpr int kHeadline = 2;
inline constexpr int kButton = 3;
inline constexpr int kOffer = 4;
inline constexpr int kDisclaimer = 5;

/// splitmix64 of (seed, index); derives independent sub-seeds.
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Dense, ordered set of element class names. Ids are indices.
class ClassRegistry {
 public:
  ClassRegistry() = default;
  explicit ClassRegistry(std::vector<std::string> names);

  /// logo, product_image, headline, button, offer, disclaimer.
  static const ClassRegistry& defaults();

  int size() const noexcept { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const;
  /// Throws ValidationError for unknown names.
  int id(std::string_view name) const;
  std::optional<int> find(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool operator==(const ClassRegistry&) const = default;

 private:
  std::vector<std::string> names_;
};

enum class AspectClass { portrait, square, landscape };

std::string_view to_string(AspectClass aspect);
AspectClass aspect_class_from_string(std::string_view text);
/// portrait < 1 <= landscape, square when width/height is within 5% of 1.
AspectClass classify_aspect(int width_px, int height_px);

struct Canvas {
  int width_px = 512;
  int height_px = 512;
  AspectClass aspect_class = AspectClass::square;

  static Canvas from_size(int width_px, int height_px);
  double ratio() const noexcept { return static_cast<double>(width_px) / height_px; }
  bool operator==(const Canvas&) const = default;
};

/// Normalized center coordinates and size of an axis-aligned box.
struct Geometry {
  double xc = 0.5;
  double yc = 0.5;
  double w = 0.0;
  double h = 0.0;

  double area() const noexcept { return w * h; }
  bool operator==(const Geometry&) const = default;
};

struct Corners {
  double xl, yt, xc, yc, xr, yb;
};

/// Conditioning triple: expected area, aspect ratio (h/w, 0 = free) and
/// origin distance encoding reading order (0 = unconditioned).
struct AttributeVector {
  double s = 0.0;
  double r = 0.0;
  double d = 0.0;
  bool operator==(const AttributeVector&) const = default;
};

struct Element {
  std::vector<double> class_probs;
  Geometry geometry;
  AttributeVector attributes;
  bool frozen = false;
  std::optional<int> order;
  // Unknown JSON members, carried through serialization untouched.
  nlohmann::json extra = nlohmann::json::object();

  static Element of_class(int class_id, int num_classes, const Geometry& geometry);
  /// Index of the most probable class (lowest index on ties).
  int class_id() const;
  bool operator==(const Element&) const = default;
};

struct Layout {
  std::vector<Element> elements;
  Canvas canvas;
  nlohmann::json extra = nlohmann::json::object();

  int size() const noexcept { return static_cast<int>(elements.size()); }
  bool operator==(const Layout&) const = default;
};

Corners derive_corners(const Geometry& g);
/// Inverse of derive_corners for the left/top/right/bottom edges.
Geometry geometry_from_edges(double xl, double yt, double xr, double yb);

/// Distance of the top-left corner to the canvas origin.
double origin_distance(const Geometry& g);

/// Ascending rank of each distance; ties keep list order.
std::vector<int> assign_reading_orders(std::span<const double> distances);
std::vector<int> assign_reading_orders(const Layout& layout);

/// h_final = h_pred when r == 0, else r * w_pred.
double apply_aspect_constraint(double w_pred, double h_pred, double r);

/// Area of the intersection of two boxes (product of clamped 1-D overlaps).
double intersection_area(const Geometry& a, const Geometry& b);

struct Violation {
  int element = -1;  // -1 for layout-level violations
  std::string invariant;
  std::string message;
};

/// Checks every type invariant; never throws.
std::vector<Violation> validate_layout(const Layout& layout,
                                       const ClassRegistry& classes = ClassRegistry::defaults());
/// Throws ValidationError listing the violations, if any.
void require_valid(const Layout& layout, const ClassRegistry& classes = ClassRegistry::defaults());

/// True when the values form a permutation of 0..n-1.
bool is_permutation_of_range(std::span<const int> values);

}  // namespace layoutforge
