#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layoutforge/core.hpp"

namespace layoutforge {

/// Raised for schema violations; `path` is a JSON pointer to the field.
class ParseError : public ValidationError {
 public:
  ParseError(std::string path, const std::string& message);
  const std::string& path() const noexcept { return path_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string path_;
  std::string message_;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Size model of one element class in the synthetic corpus.
struct ClassSizeModel {
  double area_min = 0.01;
  double area_max = 0.05;
  // Ratio-fixed classes draw a physical aspect (height/width in pixels);
  // other classes draw a normalized width.
  double ratio_min = 0.5;
  double ratio_max = 1.0;
  double width_min = 0.4;
  double width_max = 0.9;
};

struct CorpusConfig {
  int size = 2000;
  std::map<AspectClass, double> aspect_mix{{AspectClass::square, 1.0}};
  /// Relative weights of element counts 2..6.
  std::vector<double> count_weights{1, 1, 1, 1, 1};
  /// Per class id; defaults cover the six default classes.
  std::vector<ClassSizeModel> class_sizes = default_class_sizes();
  std::set<int> ratio_fixed_classes{kLogo, kProductImage};
  /// Classes present in every layout.
  std::vector<int> always_include{kProductImage};
  /// Top-to-bottom stacking order of classes.
  std::vector<int> stack_order{kLogo, kHeadline, kProductImage, kOffer, kButton, kDisclaimer};
  /// Fraction of layouts sharing a left edge; the rest share the x-center 0.5.
  double left_align_fraction = 0.5;
  double margin = 0.05;
  int max_attempts = 1000;
  std::uint64_t seed = 1;

  static std::vector<ClassSizeModel> default_class_sizes();
  void validate(const ClassRegistry& classes) const;
};

/// Canvas used for an aspect class in synthetic data (1:2, 1:1, 2:1).
Canvas default_canvas(AspectClass aspect);

/// Vertical stacks with one exact shared alignment coordinate, no overlap,
/// quantized to 1/1024 so every derived edge is exact in binary floating point.
std::vector<Layout> generate_synthetic_corpus(const CorpusConfig& config,
                                              const ClassRegistry& classes = ClassRegistry::defaults());

inline const std::set<int>& default_ratio_fixed_classes() {
  static const std::set<int> classes{kLogo, kProductImage};
  return classes;
}

/// s = w h; r = h / w for ratio-fixed classes, else 0; d = origin distance.
std::vector<AttributeVector> extract_attributes(const Layout& layout,
                                                const std::set<int>& ratio_fixed_classes =
                                                    default_ratio_fixed_classes());
/// Copy of `layout` with extracted attributes and reading orders stored.
Layout annotate(Layout layout, const std::set<int>& ratio_fixed_classes = default_ratio_fixed_classes());

// Layout JSON:
// { "canvas": {"width_px", "height_px", "aspect_class"},
//   "elements": [ {"class", "xC", "yC", "w", "h", "attributes": {"s","r","d"},
//                  "order"?, "frozen"?, "class_probs"?} ] }
nlohmann::json layout_to_json(const Layout& layout, const ClassRegistry& classes = ClassRegistry::defaults());
Layout layout_from_json(const nlohmann::json& doc, const ClassRegistry& classes = ClassRegistry::defaults());
Canvas canvas_from_json(const nlohmann::json& doc, const std::string& path = "/canvas");
nlohmann::json canvas_to_json(const Canvas& canvas);

std::string write_layout(const Layout& layout, const ClassRegistry& classes = ClassRegistry::defaults());
Layout read_layout(const std::string& text, const ClassRegistry& classes = ClassRegistry::defaults());

void save_layout(const std::filesystem::path& path, const Layout& layout,
                 const ClassRegistry& classes = ClassRegistry::defaults());
Layout load_layout(const std::filesystem::path& path, const ClassRegistry& classes = ClassRegistry::defaults());

/// Corpus file: {"format": "layoutforge-corpus", "layouts": [...]} (a bare array also loads).
void save_corpus(const std::filesystem::path& path, const std::vector<Layout>& layouts,
                 const ClassRegistry& classes = ClassRegistry::defaults());
std::vector<Layout> load_corpus(const std::filesystem::path& path,
                                const ClassRegistry& classes = ClassRegistry::defaults());

/// Seeded shuffle into (train, held-out); held-out gets round(fraction * n), at least 1 when n > 1.
std::pair<std::vector<Layout>, std::vector<Layout>> split_corpus(const std::vector<Layout>& layouts,
                                                                 double holdout_fraction,
                                                                 std::uint64_t seed);

}  // namespace layoutforge
