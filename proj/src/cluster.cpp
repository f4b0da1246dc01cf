#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "layoutforge/pipeline.hpp"

namespace layoutforge {

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

int nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

std::vector<int> kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed, int iterations) {
  const int n = static_cast<int>(points.size());
  if (k < 1 || k > n) throw ValidationError("k-means needs 1 <= k <= number of points");
  if (iterations < 0) throw ValidationError("k-means iterations must be >= 0");
  const size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ValidationError("k-means points have inconsistent dimensions");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> centroids;
  std::vector<bool> chosen(n, false);
  const int first = std::uniform_int_distribution<int>(0, n - 1)(rng);
  centroids.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = squared_distance(points[i], centroids[nearest(points[i], centroids)]);
      total += d2[i];
    }
    int pick = -1;
    if (total > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > u) break;
      }
    } else {
      // Every point coincides with a centroid; take the first unused index.
      for (int i = 0; i < n && pick < 0; ++i)
        if (!chosen[i]) pick = i;
    }
    centroids.push_back(points[pick]);
    chosen[pick] = true;
  }

  std::vector<int> labels(n, -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest(points[i], centroids);
      if (c != labels[i]) {
        labels[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (size_t j = 0; j < dim; ++j) sums[labels[i]][j] += points[i][j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (size_t j = 0; j < dim; ++j) centroids[c][j] = sums[c][j] / counts[c];
    }
  }
  if (iterations == 0)
    for (int i = 0; i < n; ++i) labels[i] = nearest(points[i], centroids);
  return labels;
}

std::vector<std::array<double, 2>> tsne_embed(const std::vector<std::vector<double>>& features, std::uint64_t seed,
                                              const TsneOptions& options) {
  const int n = static_cast<int>(features.size());
  if (n < 2) throw ValidationError("t-SNE needs at least two points");
  if (!(options.perplexity > 0.0) || options.iterations < 1 || !(options.learning_rate > 0.0))
    throw ValidationError("invalid t-SNE options");
  const double perplexity = std::max(1.0, std::min(options.perplexity, (n - 1) / 3.0));
  const double target_entropy = std::log(perplexity);

  std::vector<double> dist(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) dist[i * n + j] = squared_distance(features[i], features[j]);

  // Conditional affinities with a per-point bandwidth matching the perplexity.
  std::vector<double> P(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double min_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) min_d = std::min(min_d, dist[i * n + j]);
    for (int attempt = 0; attempt < 100; ++attempt) {
      double sum = 0.0, weighted = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double p = std::exp(-(dist[i * n + j] - min_d) * beta);
        P[i * n + j] = p;
        sum += p;
        weighted += (dist[i * n + j] - min_d) * p;
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (int j = 0; j < n; ++j) P[i * n + j] /= sum;
      const double diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double s = std::max((P[i * n + j] + P[j * n + i]) / (2.0 * n), 1e-12);
      P[i * n + j] = P[j * n + i] = s;
    }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  std::vector<std::array<double, 2>> Y(n), update(n, {0.0, 0.0}), gains(n, {1.0, 1.0});
  for (auto& y : Y) y = {normal(rng), normal(rng)};

  const int exaggeration_iters = std::min(250, options.iterations / 4);
  std::vector<double> num(static_cast<size_t>(n) * n);
  for (int it = 0; it < options.iterations; ++it) {
    const double exaggeration = it < exaggeration_iters ? 12.0 : 1.0;
    const double momentum = it < exaggeration_iters ? 0.5 : 0.8;
    double qsum = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          num[i * n + j] = 0.0;
          continue;
        }
        const double dx = Y[i][0] - Y[j][0], dy = Y[i][1] - Y[j][1];
        num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
        qsum += num[i * n + j];
      }
    for (int i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num[i * n + j] / qsum, 1e-12);
        const double m = (exaggeration * P[i * n + j] - q) * num[i * n + j];
        gx += m * (Y[i][0] - Y[j][0]);
        gy += m * (Y[i][1] - Y[j][1]);
      }
      const double g[2] = {4.0 * gx, 4.0 * gy};
      for (int d = 0; d < 2; ++d) {
        gains[i][d] = (g[d] > 0) != (update[i][d] > 0) ? gains[i][d] + 0.2 : gains[i][d] * 0.8;
        gains[i][d] = std::max(gains[i][d], 0.01);
        update[i][d] = momentum * update[i][d] - options.learning_rate * gains[i][d] * g[d];
      }
    }
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
      Y[i][0] += update[i][0];
      Y[i][1] += update[i][1];
      mx += Y[i][0];
      my += Y[i][1];
    }
    for (auto& y : Y) {
      y[0] -= mx / n;
      y[1] -= my / n;
    }
  }
  return Y;
}

std::string cluster_plot_svg(const std::vector<std::array<double, 2>>& coords, const std::vector<int>& clusters,
                             const std::vector<int>& recommended) {
  if (coords.size() != clusters.size()) throw ValidationError("cluster plot needs one label per point");
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double size = 480.0, pad = 40.0;
  double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
  if (!coords.empty()) {
    min_x = max_x = coords[0][0];
    min_y = max_y = coords[0][1];
    for (const auto& c : coords) {
      min_x = std::min(min_x, c[0]);
      max_x = std::max(max_x, c[0]);
      min_y = std::min(min_y, c[1]);
      max_y = std::max(max_y, c[1]);
    }
  }
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-12});
  auto px = [&](double x) { return pad + (x - min_x) / span * (size - 2 * pad); };
  auto py = [&](double y) { return pad + (y - min_y) / span * (size - 2 * pad); };

  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n",
                size, size, size, size);
  out << buf << "<path d=\"M0 0H" << size << "V" << size << "H0Z\" fill=\"#ffffff\"/>\n";
  for (size_t i = 0; i < coords.size(); ++i) {
    const char* color = kColors[static_cast<size_t>(std::max(0, clusters[i])) % std::size(kColors)];
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"5\" fill=\"%s\"><title>%zu</title></circle>\n",
                  px(coords[i][0]), py(coords[i][1]), color, i);
    out << buf;
  }
  for (int idx : recommended) {
    if (idx < 0 || static_cast<size_t>(idx) >= coords.size()) continue;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"9\" fill=\"none\" stroke=\"#000000\"/>\n",
                  px(coords[idx][0]), py(coords[idx][1]));
    out << buf;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace layoutforge
