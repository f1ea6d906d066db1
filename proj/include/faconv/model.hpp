#pragma once

// A full model as trained and evaluated by the harness: a recurrent core
// (FAConvLSTM or ConvLSTM2D), the temporal subspace head and a pointwise
// decoder for the reconstruction task.

#include <optional>
#include <string>
#include <vector>

#include "faconv/cell.hpp"
#include "faconv/cost_model.hpp"
#include "faconv/objectives.hpp"

namespace faconv {

struct ModelOutput {
  std::vector<Var> hidden;
  Var S;
  Var Z;
  std::size_t axialRefinements = 0;
  std::uint64_t coreMacs = 0;
  std::uint64_t headMacs = 0;
};

class SpatioTemporalModel {
 public:
  SpatioTemporalModel(Architecture arch, ModelConfig cfg) : arch_(arch), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (arch_ == Architecture::FAConvLSTM) {
      fa_.emplace(cfg_, "fa");
    } else {
      base_.emplace(cfg_, "convlstm");
      head_.emplace(cfg_, "convlstm/head");
    }
  }

  Architecture architecture() const { return arch_; }
  const ModelConfig& config() const { return cfg_; }
  const Decoder& decoder() const { return decoder_; }

  void init(ParameterStore& store, std::mt19937_64& rng) const {
    if (fa_) {
      fa_->init(store, rng);
    } else {
      base_->init(store, rng);
      head_->init(store, rng);
    }
    decoder_.init(store, cfg_.F, cfg_.C, rng);
  }

  ModelOutput forward(const Context& ctx, const std::vector<Tensor4D>& xs, std::size_t t0 = 0) const {
    ModelOutput out;
    if (fa_) {
      auto r = fa_->forward(ctx, xs, t0);
      out.hidden = std::move(r.hidden);
      out.S = r.S;
      out.Z = r.Z;
      out.axialRefinements = r.axialRefinements;
      out.coreMacs = r.coreMacs;
      out.headMacs = r.headMacs;
      return out;
    }
    {
      MacScope core;
      out.hidden = base_->forward(ctx, xs);
      out.coreMacs = core.elapsed();
    }
    MacScope head;
    std::vector<Var> embeddings;
    for (const auto& h : out.hidden) embeddings.push_back(head_->embed(ctx, h));
    std::tie(out.S, out.Z) = head_->attend(ctx, embeddings, t0);
    out.headMacs = head.elapsed();
    return out;
  }

  // Composite training objective on one window.
  Var objective(const Context& ctx, const std::vector<Tensor4D>& xs, const ModelOutput& out,
                const ObjectiveWeights& w, LossBreakdown* breakdown = nullptr) const {
    Var task = reconstruction_loss(ctx.tape, ctx.store, xs, out.hidden, decoder_);
    return composite_objective(task, laplacian_smoothness(out.hidden), temporal_consistency(out.S), w, breakdown);
  }

  std::vector<Tensor4D> reconstruct(const Context& ctx, const ModelOutput& out) const {
    std::vector<Tensor4D> r;
    for (const auto& h : out.hidden) r.push_back(decoder_.decode(ctx.tape, ctx.store, h).value());
    return r;
  }

 private:
  Architecture arch_;
  ModelConfig cfg_;
  std::optional<FAConvLSTM> fa_;
  std::optional<ConvLSTM2D> base_;
  std::optional<TemporalHead> head_;
  Decoder decoder_;
};

}  // namespace faconv
