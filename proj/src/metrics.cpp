#include "layoutforge/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "layoutforge/losses.hpp"

namespace layoutforge {

namespace {

void require_nonempty(std::span<const Layout> layouts, const char* what) {
  if (layouts.empty()) throw ValidationError(std::string(what) + ": empty layout set");
}

std::vector<Geometry> geometries(const Layout& layout) {
  std::vector<Geometry> out;
  out.reserve(layout.elements.size());
  for (const auto& e : layout.elements) out.push_back(e.geometry);
  return out;
}

}  // namespace

double overlap_index(std::span<const Layout> layouts) {
  require_nonempty(layouts, "overlap_index");
  double total = 0.0;
  for (const auto& layout : layouts) total += overlap_loss(geometries(layout));
  return total / static_cast<double>(layouts.size());
}

double alignment_index(std::span<const Layout> layouts) {
  require_nonempty(layouts, "alignment_index");
  double total = 0.0;
  for (const auto& layout : layouts) total += alignment_loss(geometries(layout));
  return total / static_cast<double>(layouts.size());
}

double symmetry_score(const Layout& layout, int width, int height) {
  if (width < 1 || height < 1) throw ValidationError("symmetry_score: raster size must be positive");
  std::vector<std::uint8_t> on(static_cast<size_t>(width) * height, 0);
  for (const auto& e : layout.elements) {
    const auto& g = e.geometry;
    if (!std::isfinite(g.xc) || !std::isfinite(g.yc) || !std::isfinite(g.w) || !std::isfinite(g.h))
      throw ValidationError("symmetry_score: non-finite geometry");
    // Centered form keeps the test exactly mirror-symmetric.
    const double cx = g.xc * width, hx = g.w * width / 2.0;
    const double cy = g.yc * height, hy = g.h * height / 2.0;
    for (int v = 0; v < height; ++v) {
      if (std::abs(v + 0.5 - cy) > hy) continue;
      for (int u = 0; u < width; ++u) {
        if (std::abs(u + 0.5 - cx) <= hx) on[static_cast<size_t>(v) * width + u] = 1;
      }
    }
  }
  long occupied = 0, mirrored = 0;
  for (int v = 0; v < height; ++v) {
    const auto* row = &on[static_cast<size_t>(v) * width];
    for (int u = 0; u < width; ++u) {
      if (!row[u]) continue;
      ++occupied;
      if (row[width - 1 - u]) ++mirrored;
    }
  }
  if (occupied == 0) return 1.0;
  return static_cast<double>(mirrored) / static_cast<double>(occupied);
}

double symmetry_score(const Layout& layout) {
  return symmetry_score(layout, layout.canvas.width_px, layout.canvas.height_px);
}

double mean_symmetry(std::span<const Layout> layouts) {
  require_nonempty(layouts, "mean_symmetry");
  double total = 0.0;
  for (const auto& layout : layouts) total += symmetry_score(layout);
  return total / static_cast<double>(layouts.size());
}

std::map<int, ClassAreaStats> area_difference_stats(
    std::span<const Layout> layouts, const std::vector<std::vector<AttributeVector>>& conditions) {
  if (conditions.size() != layouts.size())
    throw ValidationError("area_difference_stats: " + std::to_string(layouts.size()) + " layouts but " +
                          std::to_string(conditions.size()) + " condition sets");
  std::map<int, std::vector<double>> diffs;
  for (size_t i = 0; i < layouts.size(); ++i) {
    const auto& layout = layouts[i];
    if (conditions[i].size() != layout.elements.size())
      throw ValidationError("area_difference_stats: layout " + std::to_string(i) +
                            " has missing conditions");
    for (size_t k = 0; k < layout.elements.size(); ++k) {
      const double s = conditions[i][k].s;
      if (!(s > 0.0))
        throw ValidationError("area_difference_stats: layout " + std::to_string(i) + " element " +
                              std::to_string(k) + " has no positive target area");
      const double s_pred = layout.elements[k].geometry.area();
      diffs[layout.elements[k].class_id()].push_back(std::abs(s_pred - s) / s);
    }
  }
  std::map<int, ClassAreaStats> out;
  for (const auto& [cls, values] : diffs) {
    ClassAreaStats st;
    st.count = static_cast<int>(values.size());
    for (double v : values) st.mean += v;
    st.mean /= st.count;
    double var = 0.0;
    for (double v : values) var += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(var / st.count);
    out[cls] = st;
  }
  return out;
}

std::map<int, ClassAreaStats> area_difference_stats(std::span<const Layout> layouts) {
  std::vector<std::vector<AttributeVector>> conditions;
  conditions.reserve(layouts.size());
  for (const auto& layout : layouts) {
    auto& c = conditions.emplace_back();
    for (const auto& e : layout.elements) c.push_back(e.attributes);
  }
  return area_difference_stats(layouts, conditions);
}

double order_retention(const Layout& layout) {
  if (layout.elements.empty()) throw ValidationError("order_retention: layout has no elements");
  const auto ranks = assign_reading_orders(layout);
  int kept = 0;
  for (size_t k = 0; k < layout.elements.size(); ++k) {
    const auto& order = layout.elements[k].order;
    if (!order) throw ValidationError("order_retention: element " + std::to_string(k) + " has no order annotation");
    if (*order == ranks[k]) ++kept;
  }
  return static_cast<double>(kept) / static_cast<double>(layout.elements.size());
}

std::vector<double> order_retention_curve(std::span<const Layout> layouts, std::span<const double> thresholds) {
  std::vector<double> retention;
  retention.reserve(layouts.size());
  for (const auto& layout : layouts) retention.push_back(order_retention(layout));
  std::vector<double> curve;
  if (thresholds.empty()) return curve;
  require_nonempty(layouts, "order_retention_curve");
  for (double t : thresholds) {
    // Small slack so 2/4 counts toward a 0.5 threshold despite rounding.
    long n = 0;
    for (double r : retention)
      if (r >= t - 1e-12) ++n;
    curve.push_back(static_cast<double>(n) / static_cast<double>(retention.size()));
  }
  return curve;
}

MetricReport evaluate_layouts(std::span<const Layout> layouts, const MetricOptions& options) {
  MetricReport report;
  report.overlap_index = overlap_index(layouts);
  report.alignment_index = alignment_index(layouts);
  report.symmetry_score = mean_symmetry(layouts);
  if (options.area) report.area_difference = area_difference_stats(layouts);
  if (options.orders) {
    const auto curve = order_retention_curve(layouts, options.thresholds);
    for (size_t i = 0; i < curve.size(); ++i) report.order_retention.emplace_back(options.thresholds[i], curve[i]);
  }
  return report;
}

nlohmann::json to_json(const MetricReport& report, const ClassRegistry& classes) {
  nlohmann::json j;
  j["overlap_index"] = report.overlap_index;
  j["alignment_index"] = report.alignment_index;
  j["symmetry_score"] = report.symmetry_score;
  auto area = nlohmann::json::object();
  for (const auto& [cls, st] : report.area_difference) {
    const std::string name = cls < classes.size() ? classes.name(cls) : std::to_string(cls);
    area[name] = {{"mean", st.mean}, {"std", st.stddev}, {"count", st.count}};
  }
  j["area_difference"] = area;
  auto curve = nlohmann::json::array();
  for (const auto& [t, p] : report.order_retention) curve.push_back({{"threshold", t}, {"proportion", p}});
  j["order_retention"] = curve;
  return j;
}

std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  size_t name_width = 6;
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());
  std::ostringstream out;
  char buf[128];
  out << std::string(name_width, ' ');
  std::snprintf(buf, sizeof buf, "  %10s  %10s  %10s\n", "overlap", "alignment", "symmetry");
  out << buf;
  for (const auto& [name, r] : rows) {
    out << name << std::string(name_width - name.size(), ' ');
    std::snprintf(buf, sizeof buf, "  %10.4f  %10.4f  %9.2f%%\n", r.overlap_index, r.alignment_index,
                  100.0 * r.symmetry_score);
    out << buf;
  }
  return out.str();
}

}  // namespace layoutforge
