#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "faconv/autodiff.hpp"

namespace faconv {

// Central-difference gradient of a scalar function of one tensor.
inline Tensor4D finite_diff_grad(const std::function<double(const Tensor4D&)>& loss, const Tensor4D& theta,
                                 double step = 1e-5) {
  if (!(step > 0.0)) throw ArgumentError("finite difference step must be > 0");
  Tensor4D probe = theta;
  Tensor4D grad(theta.shape());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = loss(probe);
    probe[i] = orig - step;
    const double down = loss(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Central differences over every scalar in a parameter store. Returns a map
// path -> gradient estimate, in store order.
inline std::map<std::string, Tensor4D> finite_diff_grad(const std::function<double()>& loss, ParameterStore& store,
                                                        double step = 1e-5) {
  std::map<std::string, Tensor4D> out;
  for (auto& [path, entry] : store) {
    Tensor4D g(entry.value.shape());
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double orig = entry.value[i];
      entry.value[i] = orig + step;
      const double up = loss();
      entry.value[i] = orig - step;
      const double down = loss();
      entry.value[i] = orig;
      g[i] = (up - down) / (2.0 * step);
    }
    out.emplace(path, std::move(g));
  }
  return out;
}

// Elementwise relative error |a-b| / max(|a|, |b|, floor). The floor keeps
// near-zero components from turning round-off into a large ratio: central
// differences at step 1e-5 carry ~1e-10 absolute noise on O(1) losses.
inline constexpr double kRelErrorFloor = 1e-5;

inline double relative_error(double a, double b, double floor = kRelErrorFloor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const Tensor4D& a, const Tensor4D& b, double floor = kRelErrorFloor) {
  if (a.shape() != b.shape()) throw DimensionError("max_relative_error shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, relative_error(a[i], b[i], floor));
  return m;
}

}  // namespace faconv
