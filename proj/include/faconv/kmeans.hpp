#pragma once

// k-means with k-means++ seeding and best-of-restarts selection by
// within-cluster sum of squares. Points are the rows of a [1,1,T,D] matrix.

#include <limits>
#include <random>
#include <vector>

#include "faconv/tensor.hpp"

namespace faconv {

struct KMeansResult {
  std::vector<std::size_t> labels;
  Tensor4D centroids;  // [1,1,k,D]
  double wcss = 0.0;
  std::size_t iterations = 0;
};

struct KMeansOptions {
  std::size_t k = 3;
  std::uint64_t seed = 1;
  std::size_t restarts = 10;
  std::size_t maxIterations = 300;
};

namespace kmeans_detail {

inline double sq_dist(const Tensor4D& X, std::size_t i, const Tensor4D& Cm, std::size_t j) {
  double s = 0.0;
  for (std::size_t d = 0; d < X.cols(); ++d) {
    const double diff = X.at(i, d) - Cm.at(j, d);
    s += diff * diff;
  }
  return s;
}

inline Tensor4D plus_plus_seed(const Tensor4D& X, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = X.rows(), D = X.cols();
  Tensor4D Cm = Tensor4D::matrix(k, D);
  auto copy_row = [&](std::size_t from, std::size_t to) {
    for (std::size_t d = 0; d < D; ++d) Cm.at(to, d) = X.at(from, d);
  };
  copy_row(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng), 0);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], sq_dist(X, i, Cm, c - 1));
      total += closest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (closest[i] <= 0.0) continue;
        if (r < closest[i]) {
          pick = i;
          break;
        }
        r -= closest[i];
      }
      // Floating-point slack can walk off the end onto a zero-weight point.
      while (closest[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    copy_row(pick, c);
  }
  return Cm;
}

inline KMeansResult lloyd(const Tensor4D& X, Tensor4D Cm, std::size_t max_iter) {
  const std::size_t n = X.rows(), D = X.cols(), k = Cm.rows();
  KMeansResult r;
  r.labels.assign(n, k);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(X, i, Cm, 0);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(X, i, Cm, c);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (r.labels[i] != best) {
        r.labels[i] = best;
        changed = true;
      }
    }
    r.iterations = it + 1;

    std::vector<std::size_t> counts(k, 0);
    Tensor4D sums = Tensor4D::matrix(k, D);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[r.labels[i]];
      for (std::size_t d = 0; d < D; ++d) sums.at(r.labels[i], d) += X.at(i, d);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed an empty cluster at the point farthest from its centroid.
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(X, i, Cm, r.labels[i]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        for (std::size_t d = 0; d < D; ++d) Cm.at(c, d) = X.at(far, d);
        r.labels[far] = c;
        changed = true;
        continue;
      }
      for (std::size_t d = 0; d < D; ++d) Cm.at(c, d) = sums.at(c, d) / static_cast<double>(counts[c]);
    }
    if (!changed) break;
  }
  r.wcss = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.wcss += sq_dist(X, i, Cm, r.labels[i]);
  r.centroids = std::move(Cm);
  return r;
}

}  // namespace kmeans_detail

inline KMeansResult kmeans_cluster(const Tensor4D& points, const KMeansOptions& opt) {
  const std::size_t n = points.rows();
  if (points.n() != 1 || points.h() != 1) throw DimensionError("k-means expects a [1,1,T,D] matrix");
  if (opt.k < 1) throw ArgumentError("k must be >= 1");
  if (opt.k > n) throw ArgumentError("k = " + std::to_string(opt.k) + " exceeds the " + std::to_string(n) + " points");
  if (opt.restarts < 1) throw ArgumentError("restarts must be >= 1");
  std::mt19937_64 rng(opt.seed);
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < opt.restarts; ++r) {
    auto res = kmeans_detail::lloyd(points, kmeans_detail::plus_plus_seed(points, opt.k, rng), opt.maxIterations);
    if (res.wcss < best.wcss) best = std::move(res);
  }
  return best;
}

}  // namespace faconv
