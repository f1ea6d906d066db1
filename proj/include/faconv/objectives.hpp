#pragma once

#include <string>
#include <vector>

#include "faconv/autodiff.hpp"

namespace faconv {

struct ObjectiveWeights {
  double spatial = 1e-4;   // lambda_s
  double temporal = 1e-4;  // lambda_t

  void validate() const {
    if (!(spatial >= 0.0) || !(temporal >= 0.0)) throw ConfigError("objective weights must be non-negative");
  }
};

struct LossBreakdown {
  double task = 0.0;
  double spatial = 0.0;
  double temporal = 0.0;
  double total = 0.0;
};

// Spatial Laplacian smoothness over a hidden sequence: squared differences of
// vertically and horizontally adjacent channel vectors, summed over valid
// pairs and timesteps. With `normalized` the sum is divided by T*H*W*F.
inline Var laplacian_smoothness(const std::vector<Var>& hidden, bool normalized = true) {
  if (hidden.empty()) throw ArgumentError("laplacian_smoothness needs at least one timestep");
  Var acc = ad::laplacian_energy(hidden.front());
  for (std::size_t t = 1; t < hidden.size(); ++t) acc = ad::add(acc, ad::laplacian_energy(hidden[t]));
  if (!normalized) return acc;
  const auto& s = hidden.front().shape();
  return ad::scale(acc, 1.0 / static_cast<double>(hidden.size() * s.n * s.h * s.w * s.c));
}

inline double laplacian_smoothness_value(const std::vector<Tensor4D>& hidden, bool normalized = true) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& h : hidden) {
    acc += ad::laplacian_energy_value(h);
    count += h.size();
  }
  return normalized && count > 0 ? acc / static_cast<double>(count) : acc;
}

// Decoder: pointwise F -> C convolution with bias.
struct Decoder {
  std::string prefix = "decoder";

  void init(ParameterStore& store, std::size_t F, std::size_t C, std::mt19937_64& rng) const {
    const double a = std::sqrt(6.0 / static_cast<double>(F + C));
    store.add(prefix + "/weight", random_uniform({1, 1, F, C}, -a, a, rng));
    store.add(prefix + "/bias", Tensor4D::vector(C, 0.0));
  }

  Var decode(Tape& tape, ParameterStore& store, Var h) const {
    return ad::pointwise(h, tape.param(store, prefix + "/weight"), tape.param(store, prefix + "/bias"));
  }
};

// Mean squared error between decoded hidden states and the inputs, averaged
// over T*H*W*C.
inline Var reconstruction_loss(Tape& tape, ParameterStore& store, const std::vector<Tensor4D>& xs,
                               const std::vector<Var>& hidden, const Decoder& decoder) {
  if (xs.size() != hidden.size() || xs.empty()) {
    throw DimensionError("reconstruction_loss: " + std::to_string(xs.size()) + " inputs vs " +
                         std::to_string(hidden.size()) + " hidden states");
  }
  Var acc = ad::mse(decoder.decode(tape, store, hidden[0]), tape.constant(xs[0]));
  for (std::size_t t = 1; t < xs.size(); ++t) {
    acc = ad::add(acc, ad::mse(decoder.decode(tape, store, hidden[t]), tape.constant(xs[t])));
  }
  return ad::scale(acc, 1.0 / static_cast<double>(xs.size()));
}

// First-difference energy of the embedding sequence, averaged over the T-1
// transitions. Zero for T == 1.
inline Var temporal_consistency(Var S) {
  const std::size_t T = S.value().rows();
  if (T == 0) throw ArgumentError("temporal_consistency needs T >= 1");
  Var e = ad::row_difference_energy(S);
  return T > 1 ? ad::scale(e, 1.0 / static_cast<double>(T - 1)) : ad::scale(e, 0.0);
}

inline LossBreakdown composite_objective(double task, double spatial, double temporal, const ObjectiveWeights& w) {
  w.validate();
  return {task, spatial, temporal, task + w.spatial * spatial + w.temporal * temporal};
}

// Tape form of the composite total; the returned breakdown mirrors its value.
inline Var composite_objective(Var task, Var spatial, Var temporal, const ObjectiveWeights& w,
                               LossBreakdown* breakdown = nullptr) {
  w.validate();
  Var total = ad::add(ad::add(task, ad::scale(spatial, w.spatial)), ad::scale(temporal, w.temporal));
  if (breakdown) {
    *breakdown = composite_objective(task.value().item(), spatial.value().item(), temporal.value().item(), w);
  }
  return total;
}

}  // namespace faconv
