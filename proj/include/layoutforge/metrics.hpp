#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "layoutforge/core.hpp"

namespace layoutforge {

struct ClassAreaStats {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

struct MetricReport {
  double overlap_index = 0.0;
  double alignment_index = 0.0;
  double symmetry_score = 0.0;
  std::map<int, ClassAreaStats> area_difference;
  /// (threshold, proportion of layouts) pairs.
  std::vector<std::pair<double, double>> order_retention;
};

/// Mean over layouts of the overlap loss of each layout.
double overlap_index(std::span<const Layout> layouts);
/// Mean over layouts of the alignment loss of each layout.
double alignment_index(std::span<const Layout> layouts);

/// Fraction of occupied pixels whose mirror across the vertical centerline
/// is also occupied. Occupancy samples pixel centers against filled boxes.
/// A blank canvas scores 1.
double symmetry_score(const Layout& layout, int width, int height);
/// Uses the layout's own canvas size.
double symmetry_score(const Layout& layout);
/// Mean symmetry over layouts.
double mean_symmetry(std::span<const Layout> layouts);

/// Per class id, mean and population std of |s' - s| / s.
/// `conditions[i][k]` is the target of element k of layout i.
std::map<int, ClassAreaStats> area_difference_stats(std::span<const Layout> layouts,
                                                    const std::vector<std::vector<AttributeVector>>& conditions);
/// Uses each element's stored attributes as its condition.
std::map<int, ClassAreaStats> area_difference_stats(std::span<const Layout> layouts);

/// Fraction of elements of one layout whose distance rank equals its stored order.
double order_retention(const Layout& layout);
/// Proportion of layouts whose retention is at least each threshold.
std::vector<double> order_retention_curve(std::span<const Layout> layouts, std::span<const double> thresholds);

struct MetricOptions {
  bool area = true;
  bool orders = false;
  std::vector<double> thresholds{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
};

MetricReport evaluate_layouts(std::span<const Layout> layouts, const MetricOptions& options = {});

nlohmann::json to_json(const MetricReport& report, const ClassRegistry& classes = ClassRegistry::defaults());
/// Plain-text table, one row per metric set.
std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace layoutforge
