#pragma once

// Clustering and reconstruction metrics. Embeddings are the rows of a
// [1,1,T,D] matrix; cluster centroids are recomputed as label means.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "faconv/tensor.hpp"

namespace faconv {

struct MetricsReport {
  double silhouette = 0.0;
  double daviesBouldin = 0.0;
  double calinskiHarabasz = 0.0;
  double rmse = 0.0;
  double variance = 0.0;
  double interCentroidDistance = 0.0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string architecture;
};

namespace metrics_detail {

inline double dist(const Tensor4D& X, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t d = 0; d < X.cols(); ++d) {
    const double diff = X.at(i, d) - X.at(j, d);
    s += diff * diff;
  }
  return std::sqrt(s);
}

inline void check(const Tensor4D& X, const std::vector<std::size_t>& labels) {
  if (X.n() != 1 || X.h() != 1) throw DimensionError("metrics expect a [1,1,T,D] matrix");
  if (labels.size() != X.rows()) {
    throw DimensionError("label count " + std::to_string(labels.size()) + " != point count " +
                         std::to_string(X.rows()));
  }
}

}  // namespace metrics_detail

// Distinct labels relabelled 0..k-1 in ascending order of the original label.
inline std::vector<std::size_t> compact_labels(const std::vector<std::size_t>& labels, std::size_t* k = nullptr) {
  std::map<std::size_t, std::size_t> ids;
  for (auto l : labels) ids.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [_, id] : ids) id = next++;
  if (k) *k = next;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(ids.at(l));
  return out;
}

inline Tensor4D cluster_means(const Tensor4D& X, const std::vector<std::size_t>& labels, std::size_t k) {
  Tensor4D M = Tensor4D::matrix(k, X.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    ++counts[labels[i]];
    for (std::size_t d = 0; d < X.cols(); ++d) M.at(labels[i], d) += X.at(i, d);
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < X.cols(); ++d) M.at(c, d) /= static_cast<double>(std::max<std::size_t>(1, counts[c]));
  return M;
}

// Per-point silhouette (b - a) / max(a, b); 0 for points in singleton
// clusters and when a = b = 0.
inline std::vector<double> silhouette_samples(const Tensor4D& X, const std::vector<std::size_t>& labels_in) {
  metrics_detail::check(X, labels_in);
  std::size_t k = 0;
  const auto labels = compact_labels(labels_in, &k);
  if (k < 2) throw ArgumentError("silhouette needs at least 2 clusters");
  const std::size_t n = X.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) ++counts[l];
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[labels[i]] < 2) continue;
    std::vector<double> sum(k, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[labels[j]] += metrics_detail::dist(X, i, j);
    const double a = sum[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != labels[i]) b = std::min(b, sum[c] / static_cast<double>(counts[c]));
    const double m = std::max(a, b);
    s[i] = m > 0.0 ? (b - a) / m : 0.0;
  }
  return s;
}

inline double silhouette_score(const Tensor4D& X, const std::vector<std::size_t>& labels) {
  const auto s = silhouette_samples(X, labels);
  double acc = 0.0;
  for (double v : s) acc += v;
  return acc / static_cast<double>(s.size());
}

// Mean over clusters of max_j (sigma_i + sigma_j) / d(c_i, c_j), sigma being
// the mean distance of members to their centroid. Pairs with coincident
// centroids are skipped; when every centroid pair coincides the index is
// undefined and +infinity is returned.
inline double davies_bouldin(const Tensor4D& X, const std::vector<std::size_t>& labels_in) {
  metrics_detail::check(X, labels_in);
  std::size_t k = 0;
  const auto labels = compact_labels(labels_in, &k);
  if (k < 2) throw ArgumentError("Davies-Bouldin needs at least 2 clusters");
  const Tensor4D M = cluster_means(X, labels, k);
  const std::size_t D = X.cols();
  std::vector<double> sigma(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += (X.at(i, d) - M.at(labels[i], d)) * (X.at(i, d) - M.at(labels[i], d));
    sigma[labels[i]] += std::sqrt(s);
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < k; ++c) sigma[c] /= static_cast<double>(counts[c]);
  bool any_separated = false;
  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    double worst = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += (M.at(a, d) - M.at(b, d)) * (M.at(a, d) - M.at(b, d));
      if (s == 0.0) continue;
      any_separated = true;
      worst = std::max(worst, (sigma[a] + sigma[b]) / std::sqrt(s));
    }
    total += worst;
  }
  if (!any_separated) return std::numeric_limits<double>::infinity();
  return total / static_cast<double>(k);
}

// [tr(B)/(k-1)] / [tr(W)/(n-k)]. When tr(W) = 0 the ratio is undefined; 1.0
// is returned in that case.
inline double calinski_harabasz(const Tensor4D& X, const std::vector<std::size_t>& labels_in) {
  metrics_detail::check(X, labels_in);
  std::size_t k = 0;
  const auto labels = compact_labels(labels_in, &k);
  const std::size_t n = X.rows(), D = X.cols();
  if (k < 2) throw ArgumentError("Calinski-Harabasz needs at least 2 clusters");
  if (n <= k) throw ArgumentError("Calinski-Harabasz needs more points than clusters");
  const Tensor4D M = cluster_means(X, labels, k);
  std::vector<double> mean(D, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < D; ++d) mean[d] += X.at(i, d) / static_cast<double>(n);
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) ++counts[l];
  double between = 0.0, within = 0.0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < D; ++d)
      between += static_cast<double>(counts[c]) * (M.at(c, d) - mean[d]) * (M.at(c, d) - mean[d]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < D; ++d) within += (X.at(i, d) - M.at(labels[i], d)) * (X.at(i, d) - M.at(labels[i], d));
  if (within == 0.0) return 1.0;
  return between * static_cast<double>(n - k) / (within * static_cast<double>(k - 1));
}

inline double rmse(const std::vector<Tensor4D>& predicted, const std::vector<Tensor4D>& target) {
  if (predicted.size() != target.size() || predicted.empty()) throw DimensionError("rmse needs equal, non-empty lists");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    require_shape(predicted[t], target[t].shape(), "rmse");
    for (std::size_t i = 0; i < predicted[t].size(); ++i) {
      const double d = predicted[t][i] - target[t][i];
      s += d * d;
    }
    count += predicted[t].size();
  }
  return std::sqrt(s / static_cast<double>(count));
}

// Pooled within-cluster variance per embedding dimension: sum of squared
// deviations from the own-cluster mean over n * D.
inline double within_cluster_variance(const Tensor4D& X, const std::vector<std::size_t>& labels_in) {
  metrics_detail::check(X, labels_in);
  std::size_t k = 0;
  const auto labels = compact_labels(labels_in, &k);
  const Tensor4D M = cluster_means(X, labels, k);
  double s = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t d = 0; d < X.cols(); ++d) s += (X.at(i, d) - M.at(labels[i], d)) * (X.at(i, d) - M.at(labels[i], d));
  return s / static_cast<double>(X.rows() * X.cols());
}

// Mean Euclidean distance over all unordered pairs of cluster means.
inline double inter_centroid_distance(const Tensor4D& X, const std::vector<std::size_t>& labels_in) {
  metrics_detail::check(X, labels_in);
  std::size_t k = 0;
  const auto labels = compact_labels(labels_in, &k);
  if (k < 2) return 0.0;
  const Tensor4D M = cluster_means(X, labels, k);
  double s = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < X.cols(); ++d) d2 += (M.at(a, d) - M.at(b, d)) * (M.at(a, d) - M.at(b, d));
      s += std::sqrt(d2);
    }
  return s / static_cast<double>(k * (k - 1) / 2);
}

// Fraction of points whose cluster's majority true label equals their own.
// Ties go to the smallest true label.
inline double majority_vote_accuracy(const std::vector<std::size_t>& clusters, const std::vector<std::size_t>& truth) {
  if (clusters.size() != truth.size() || clusters.empty()) throw DimensionError("accuracy needs equal, non-empty label lists");
  std::map<std::size_t, std::map<std::size_t, std::size_t>> votes;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++votes[clusters[i]][truth[i]];
  std::size_t correct = 0;
  for (const auto& [_, tally] : votes) {
    std::size_t best = 0;
    for (const auto& [__, n] : tally) best = std::max(best, n);
    correct += best;
  }
  return static_cast<double>(correct) / static_cast<double>(clusters.size());
}

// The full report. RMSE is taken from the supplied reconstruction pair.
inline MetricsReport clustering_metrics(const Tensor4D& X, const std::vector<std::size_t>& labels,
                                        const std::vector<Tensor4D>& reconstructed,
                                        const std::vector<Tensor4D>& target) {
  MetricsReport r;
  compact_labels(labels, &r.k);
  r.silhouette = silhouette_score(X, labels);
  r.daviesBouldin = davies_bouldin(X, labels);
  r.calinskiHarabasz = calinski_harabasz(X, labels);
  r.rmse = rmse(reconstructed, target);
  r.variance = within_cluster_variance(X, labels);
  r.interCentroidDistance = inter_centroid_distance(X, labels);
  return r;
}

}  // namespace faconv
