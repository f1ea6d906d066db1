#pragma once

// FAConvLSTM building blocks. Each block has an `init_*` function that
// registers its parameters under a path prefix and a forward function that
// records onto a tape. Blocks are stateless: everything lives in the
// ParameterStore.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "faconv/autodiff.hpp"
#include "faconv/config.hpp"

namespace faconv {

// Per-forward context: where parameters come from and whether dropout is live.
struct Context {
  Tape& tape;
  ParameterStore& store;
  bool training = false;
  std::mt19937_64* rng = nullptr;

  Var param(const std::string& path) const { return tape.param(store, path); }
};

inline Tensor4D glorot_uniform(Shape s, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return random_uniform(s, -a, a, rng);
}

inline Tensor4D glorot_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  return glorot_uniform({1, 1, rows, cols}, rows, cols, rng);
}

// ---------------------------------------------------------------------------
// Bottleneck projection: 1x1 conv to C_b channels, normalization, dropout.

inline void init_bottleneck(ParameterStore& store, const std::string& prefix, std::size_t cin,
                            const ModelConfig& cfg, std::mt19937_64& rng) {
  store.add(prefix + "/weight", glorot_matrix(cin, cfg.Cb, rng));
  store.add(prefix + "/gamma", Tensor4D::vector(cfg.Cb, 1.0));
  store.add(prefix + "/beta", Tensor4D::vector(cfg.Cb, 0.0));
}

inline Var bottleneck_project(const Context& ctx, Var x, const std::string& prefix, const ModelConfig& cfg) {
  Var z = ad::pointwise(x, ctx.param(prefix + "/weight"));
  z = ad::group_norm(z, ctx.param(prefix + "/gamma"), ctx.param(prefix + "/beta"), cfg.normGroups, cfg.normEps);
  if (ctx.training && cfg.dropoutRate > 0.0) {
    if (!ctx.rng) throw StateError("training-mode dropout needs an rng");
    z = ad::dropout(z, cfg.dropoutRate, true, *ctx.rng);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Multiscale dilated depthwise mixing: unweighted sum of one depthwise conv
// per (k, dilation) branch.

inline std::string branch_path(const std::string& prefix, std::size_t i) {
  return prefix + "/branch" + std::to_string(i) + "/kernel";
}

inline void init_multiscale(ParameterStore& store, const std::string& prefix, std::size_t channels,
                            const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.kernelSet.empty()) throw ConfigError("multiscale mixing needs a non-empty kernel set");
  for (std::size_t i = 0; i < cfg.kernelSet.size(); ++i) {
    const auto k = cfg.kernelSet[i].k;
    store.add(branch_path(prefix, i), glorot_uniform({1, k, k, channels}, k * k, k * k, rng));
  }
}

inline Var multiscale_depthwise_mix(const Context& ctx, Var u, const std::string& prefix,
                                    const std::vector<KernelBranch>& kernelSet) {
  if (kernelSet.empty()) throw ConfigError("multiscale mixing needs a non-empty kernel set");
  Var acc = ad::depthwise(u, ctx.param(branch_path(prefix, 0)), kernelSet[0].dilation);
  for (std::size_t i = 1; i < kernelSet.size(); ++i) {
    acc = ad::add(acc, ad::depthwise(u, ctx.param(branch_path(prefix, i)), kernelSet[i].dilation));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Squeeze-and-excitation: d * sigmoid(W2 relu(W1 GAP(d))).
// W2 starts at zero so the initial gate is exactly 0.5.

inline void init_se(ParameterStore& store, const std::string& prefix, std::size_t channels, std::size_t hidden,
                    std::mt19937_64& rng) {
  if (hidden < 1) throw ConfigError("SE inner dimension must be >= 1");
  store.add(prefix + "/w1", glorot_matrix(channels, hidden, rng));
  store.add(prefix + "/w2", Tensor4D::matrix(hidden, channels, 0.0));
}

inline Var se_gate(const Context& ctx, Var d, const std::string& prefix) {
  Var g = ad::global_avg_pool(d);
  g = ad::relu(ad::pointwise(g, ctx.param(prefix + "/w1")));
  return ad::sigmoid(ad::pointwise(g, ctx.param(prefix + "/w2")));
}

inline Var se_recalibrate(const Context& ctx, Var d, const std::string& prefix) {
  return ad::mul_channel(d, se_gate(ctx, d, prefix));
}

// ---------------------------------------------------------------------------
// Axial attention: multi-head attention within each row, then within each
// column of the row output, then an output projection. Returns the residual
// refinement only; the caller adds it to the hidden state.

inline void init_axial(ParameterStore& store, const std::string& prefix, const ModelConfig& cfg,
                       std::mt19937_64& rng) {
  const auto F = cfg.F;
  const std::vector<std::string> passes =
      cfg.shareAxialProjections ? std::vector<std::string>{""} : std::vector<std::string>{"row_", "col_"};
  for (const auto& p : passes) {
    store.add(prefix + "/" + p + "wq", glorot_matrix(F, F, rng));
    store.add(prefix + "/" + p + "wk", glorot_matrix(F, F, rng));
    store.add(prefix + "/" + p + "wv", glorot_matrix(F, F, rng));
  }
  store.add(prefix + "/wo", glorot_matrix(F, F, rng));
}

inline Var attend_along(const Context& ctx, Var x, const std::string& proj_prefix, std::size_t heads,
                        kernels::Axis axis) {
  Var q = ad::pointwise(x, ctx.param(proj_prefix + "wq"));
  Var k = ad::pointwise(x, ctx.param(proj_prefix + "wk"));
  Var v = ad::pointwise(x, ctx.param(proj_prefix + "wv"));
  return ad::axis_attention(q, k, v, heads, axis);
}

inline Var axial_attention(const Context& ctx, Var h, const std::string& prefix, const ModelConfig& cfg) {
  if (cfg.F % cfg.axialHeads != 0) throw ConfigError("F must be divisible by axial heads");
  const std::string row = prefix + (cfg.shareAxialProjections ? "/" : "/row_");
  const std::string col = prefix + (cfg.shareAxialProjections ? "/" : "/col_");
  Var r = attend_along(ctx, h, row, cfg.axialHeads, kernels::Axis::Width);
  Var c = attend_along(ctx, r, col, cfg.axialHeads, kernels::Axis::Height);
  return ad::pointwise(c, ctx.param(prefix + "/wo"));
}

// ---------------------------------------------------------------------------
// Fixed sinusoidal encoding with the slowest frequency completing one cycle
// per season: P[t,2i] = sin(t w_i), P[t,2i+1] = cos(t w_i),
// w_i = (2 pi / period) * 10000^(-2i/D).

inline double sinusoid_frequency(std::size_t i, std::size_t D, double seasonPeriod) {
  return 2.0 * std::numbers::pi / seasonPeriod *
         std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(D));
}

// `t0` offsets the positions, for windows cut out of a longer sequence.
inline Tensor4D sinusoidal_encoding(std::size_t T, std::size_t D, double seasonPeriod, std::size_t t0 = 0) {
  if (D % 2 != 0) throw ConfigError("sinusoidal encoding needs an even dimension, got " + std::to_string(D));
  if (!(seasonPeriod > 0.0)) throw ConfigError("season period must be > 0");
  Tensor4D P = Tensor4D::matrix(T, D);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < D / 2; ++i) {
      const double a = static_cast<double>(t0 + t) * sinusoid_frequency(i, D, seasonPeriod);
      P.at(t, 2 * i) = std::sin(a);
      P.at(t, 2 * i + 1) = std::cos(a);
    }
  }
  return P;
}

// ---------------------------------------------------------------------------
// Temporal multi-head self-attention over [1,1,T,D] embeddings. Non-causal.

inline void init_temporal_mha(ParameterStore& store, const std::string& prefix, std::size_t D,
                              std::mt19937_64& rng) {
  for (const char* name : {"/wq", "/wk", "/wv", "/wo"}) store.add(prefix + name, glorot_matrix(D, D, rng));
}

inline Var temporal_mha(const Context& ctx, Var S, const Tensor4D& P, const std::string& prefix, std::size_t heads,
                        bool residual) {
  if (S.shape() != P.shape()) {
    throw DimensionError("temporal_mha: embeddings " + S.shape().str() + " vs encoding " + P.shape().str());
  }
  if (S.shape().c % heads != 0) throw ConfigError("D must be divisible by temporal heads");
  Var x = ad::add(S, ctx.tape.constant(P));
  Var q = ad::pointwise(x, ctx.param(prefix + "/wq"));
  Var k = ad::pointwise(x, ctx.param(prefix + "/wk"));
  Var v = ad::pointwise(x, ctx.param(prefix + "/wv"));
  Var m = ad::pointwise(ad::axis_attention(q, k, v, heads, kernels::Axis::Width), ctx.param(prefix + "/wo"));
  return residual ? ad::add(x, m) : m;
}

// ---------------------------------------------------------------------------
// Subspace head: 1x1 projection F -> D then global pooling (mean, or a
// softmax over sites of a learned linear score of the projected features).

inline void init_subspace(ParameterStore& store, const std::string& prefix, const ModelConfig& cfg,
                          std::mt19937_64& rng) {
  store.add(prefix + "/weight", glorot_matrix(cfg.F, cfg.subspaceDim, rng));
  if (cfg.pooling == Pooling::Attention) store.add(prefix + "/score", Tensor4D::matrix(cfg.subspaceDim, 1, 0.0));
}

inline Var subspace_embed(const Context& ctx, Var h, const std::string& prefix, Pooling pooling) {
  Var p = ad::pointwise(h, ctx.param(prefix + "/weight"));
  if (pooling == Pooling::Mean) return ad::global_avg_pool(p);
  Var scores = ad::pointwise(p, ctx.param(prefix + "/score"));
  return ad::attention_pool(p, scores);
}

}  // namespace faconv
