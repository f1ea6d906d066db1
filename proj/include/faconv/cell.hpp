#pragma once

// The FAConvLSTM recurrent layer, the temporal subspace head it drives, and a
// classic ConvLSTM2D baseline.

#include <cstdint>
#include <functional>
#include <tuple>
#include <string>
#include <vector>

#include "faconv/blocks.hpp"

namespace faconv {

struct CellState {
  Var hidden;
  Var cell;
};

struct SequenceOutput {
  std::vector<Var> hidden;  // H_t after any axial refinement
  Var S;                    // [1,1,T,D] subspace embeddings
  Var Z;                    // [1,1,T,D] attended embeddings
  std::size_t axialRefinements = 0;
  std::uint64_t coreMacs = 0;  // measured: recurrent steps + axial refinements
  std::uint64_t headMacs = 0;  // measured: subspace head + temporal attention
};

inline CellState zero_state(Tape& tape, std::size_t H, std::size_t W, std::size_t F) {
  return {tape.constant(Tensor4D({1, H, W, F})), tape.constant(Tensor4D({1, H, W, F}))};
}

inline void check_step_shapes(const Var& x, const CellState& state, std::size_t C, std::size_t F) {
  const auto& xs = x.shape();
  if (xs.n != 1 || xs.c != C) {
    throw DimensionError("cell input must be [1,H,W," + std::to_string(C) + "], got " + xs.str());
  }
  const Shape expected{1, xs.h, xs.w, F};
  if (state.hidden.shape() != expected) {
    throw DimensionError("hidden state shape " + state.hidden.shape().str() + " != " + expected.str());
  }
  if (state.cell.shape() != expected) {
    throw DimensionError("cell state shape " + state.cell.shape().str() + " != " + expected.str());
  }
}

// LSTM state update shared by both cells: gates arrive as [.,4F] in the
// order (i, f, o, candidate); peephole terms are added before activation.
inline CellState lstm_update(Var gates, Var prev_cell, std::size_t F, const Var* w_ci, const Var* w_cf) {
  Var i = ad::slice_channels(gates, 0, F);
  Var f = ad::slice_channels(gates, F, F);
  Var o = ad::slice_channels(gates, 2 * F, F);
  Var g = ad::slice_channels(gates, 3 * F, F);
  if (w_ci) i = ad::add(i, ad::mul_channel(prev_cell, *w_ci));
  if (w_cf) f = ad::add(f, ad::mul_channel(prev_cell, *w_cf));
  Var c = ad::add(ad::mul(ad::sigmoid(f), prev_cell), ad::mul(ad::sigmoid(i), ad::tanh(g)));
  Var h = ad::mul(ad::sigmoid(o), ad::tanh(c));
  return {h, c};
}

inline Tensor4D gate_bias_init(std::size_t F, double forgetBias) {
  Tensor4D b = Tensor4D::vector(4 * F, 0.0);
  for (std::size_t q = F; q < 2 * F; ++q) b[q] = forgetBias;
  return b;
}

// ---------------------------------------------------------------------------
// Subspace embedding + temporal self-attention, reused by both architectures.

class TemporalHead {
 public:
  TemporalHead(ModelConfig cfg, std::string prefix) : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {}

  void init(ParameterStore& store, std::mt19937_64& rng) const {
    init_subspace(store, prefix_ + "/subspace", cfg_, rng);
    init_temporal_mha(store, prefix_ + "/mha", cfg_.subspaceDim, rng);
  }

  Var embed(const Context& ctx, Var h) const { return subspace_embed(ctx, h, prefix_ + "/subspace", cfg_.pooling); }

  // Returns (S, Z) for the collected per-step embeddings.
  std::pair<Var, Var> attend(const Context& ctx, const std::vector<Var>& embeddings, std::size_t t0 = 0) const {
    Var S = ad::stack_rows(embeddings);
    const Tensor4D P = sinusoidal_encoding(embeddings.size(), cfg_.subspaceDim, cfg_.seasonPeriod, t0);
    Var Z = temporal_mha(ctx, S, P, prefix_ + "/mha", cfg_.temporalHeads, cfg_.mhaResidual);
    return {S, Z};
  }

  const std::string& prefix() const { return prefix_; }

 private:
  ModelConfig cfg_;
  std::string prefix_;
};

// ---------------------------------------------------------------------------

class FAConvLSTM {
 public:
  explicit FAConvLSTM(ModelConfig cfg, std::string prefix = "fa")
      : cfg_(std::move(cfg)), prefix_(std::move(prefix)), head_(cfg_, prefix_ + "/head") {
    cfg_.validate();
  }

  const ModelConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  const TemporalHead& head() const { return head_; }

  void init(ParameterStore& store, std::mt19937_64& rng) const {
    const std::size_t U = 2 * cfg_.Cb;
    init_bottleneck(store, prefix_ + "/bx", cfg_.C, cfg_, rng);
    init_bottleneck(store, prefix_ + "/bh", cfg_.F, cfg_, rng);
    init_multiscale(store, prefix_ + "/mix", U, cfg_, rng);
    init_se(store, prefix_ + "/se", U, cfg_.seHidden(), rng);
    store.add(prefix_ + "/ln/gamma", Tensor4D::vector(U, 1.0));
    store.add(prefix_ + "/ln/beta", Tensor4D::vector(U, 0.0));
    store.add(prefix_ + "/gates/weight", glorot_matrix(U, 4 * cfg_.F, rng));
    store.add(prefix_ + "/gates/bias", gate_bias_init(cfg_.F, cfg_.forgetBias));
    if (cfg_.peepholes) {
      store.add(prefix_ + "/peep/wci", Tensor4D::vector(cfg_.F, 0.0));
      store.add(prefix_ + "/peep/wcf", Tensor4D::vector(cfg_.F, 0.0));
    }
    if (cfg_.axialEnabled) init_axial(store, prefix_ + "/axial", cfg_, rng);
    head_.init(store, rng);
  }

  CellState zero_state(Tape& tape, std::size_t H, std::size_t W) const {
    return faconv::zero_state(tape, H, W, cfg_.F);
  }

  // Mixed features D_t = LN(SE(sum_k DWConv_k([Z_t, R_{t-1}]))).
  Var mixed_features(const Context& ctx, Var x, Var prev_hidden) const {
    Var z = bottleneck_project(ctx, x, prefix_ + "/bx", cfg_);
    Var r = bottleneck_project(ctx, prev_hidden, prefix_ + "/bh", cfg_);
    Var u = ad::concat_channels(z, r);
    Var d = multiscale_depthwise_mix(ctx, u, prefix_ + "/mix", cfg_.kernelSet);
    d = se_recalibrate(ctx, d, prefix_ + "/se");
    return ad::group_norm(d, ctx.param(prefix_ + "/ln/gamma"), ctx.param(prefix_ + "/ln/beta"), cfg_.normGroups,
                          cfg_.normEps);
  }

  CellState step(const Context& ctx, Var x, const CellState& state) const {
    check_step_shapes(x, state, cfg_.C, cfg_.F);
    Var d = mixed_features(ctx, x, state.hidden);
    Var gates = ad::pointwise(d, ctx.param(prefix_ + "/gates/weight"), ctx.param(prefix_ + "/gates/bias"));
    if (cfg_.peepholes) {
      Var wci = ctx.param(prefix_ + "/peep/wci");
      Var wcf = ctx.param(prefix_ + "/peep/wcf");
      return lstm_update(gates, state.cell, cfg_.F, &wci, &wcf);
    }
    return lstm_update(gates, state.cell, cfg_.F, nullptr, nullptr);
  }

  Var axial_refine(const Context& ctx, Var h) const {
    return ad::add(h, axial_attention(ctx, h, prefix_ + "/axial", cfg_));
  }

  bool refines_at(std::size_t t_one_based) const {
    return cfg_.axialEnabled && t_one_based % cfg_.attnInterval == 0;
  }

  // `t0` is the absolute index of xs[0]; it only shifts the positional
  // encoding. Refinement steps count from the start of `xs`.
  SequenceOutput forward(const Context& ctx, const std::vector<Tensor4D>& xs, std::size_t t0 = 0) const {
    if (xs.empty()) throw ArgumentError("sequence forward needs at least one timestep");
    SequenceOutput out;
    CellState state = zero_state(ctx.tape, xs.front().h(), xs.front().w());
    std::vector<Var> embeddings;
    for (std::size_t t = 1; t <= xs.size(); ++t) {
      MacScope core;
      state = step(ctx, ctx.tape.constant(xs[t - 1]), state);
      if (refines_at(t)) {
        state.hidden = axial_refine(ctx, state.hidden);
        ++out.axialRefinements;
      }
      out.coreMacs += core.elapsed();
      MacScope head;
      out.hidden.push_back(state.hidden);
      embeddings.push_back(head_.embed(ctx, state.hidden));
      out.headMacs += head.elapsed();
    }
    MacScope head;
    std::tie(out.S, out.Z) = head_.attend(ctx, embeddings, t0);
    out.headMacs += head.elapsed();
    return out;
  }

 private:
  ModelConfig cfg_;
  std::string prefix_;
  TemporalHead head_;
};

// ---------------------------------------------------------------------------
// ConvLSTM2D: each gate from a dense k x k convolution of the input plus one
// of the hidden state. All four gates are packed into one 4F-channel kernel
// per source, which is the same arithmetic as four separate convolutions.

class ConvLSTM2D {
 public:
  explicit ConvLSTM2D(ModelConfig cfg, std::string prefix = "convlstm")
      : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
    if (cfg_.baselineKernel % 2 == 0) throw ConfigError("baseline kernel must be odd");
  }

  const ModelConfig& config() const { return cfg_; }

  void init(ParameterStore& store, std::mt19937_64& rng) const {
    const auto k = cfg_.baselineKernel, C = cfg_.C, F = cfg_.F;
    store.add(prefix_ + "/wx", glorot_uniform({k, k, C, 4 * F}, k * k * C, k * k * 4 * F, rng));
    store.add(prefix_ + "/wh", glorot_uniform({k, k, F, 4 * F}, k * k * F, k * k * 4 * F, rng));
    store.add(prefix_ + "/bias", gate_bias_init(F, cfg_.forgetBias));
  }

  CellState zero_state(Tape& tape, std::size_t H, std::size_t W) const {
    return faconv::zero_state(tape, H, W, cfg_.F);
  }

  CellState step(const Context& ctx, Var x, const CellState& state) const {
    check_step_shapes(x, state, cfg_.C, cfg_.F);
    Var gx = ad::conv_full(x, ctx.param(prefix_ + "/wx"), ctx.param(prefix_ + "/bias"));
    Var gh = ad::conv_full(state.hidden, ctx.param(prefix_ + "/wh"));
    return lstm_update(ad::add(gx, gh), state.cell, cfg_.F, nullptr, nullptr);
  }

  std::vector<Var> forward(const Context& ctx, const std::vector<Tensor4D>& xs) const {
    if (xs.empty()) throw ArgumentError("sequence forward needs at least one timestep");
    CellState state = zero_state(ctx.tape, xs.front().h(), xs.front().w());
    std::vector<Var> hidden;
    for (const auto& x : xs) {
      state = step(ctx, ctx.tape.constant(x), state);
      hidden.push_back(state.hidden);
    }
    return hidden;
  }

 private:
  ModelConfig cfg_;
  std::string prefix_;
};

}  // namespace faconv
