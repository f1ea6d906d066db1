#pragma once

// Module gradient suite: every differentiable op, every block, both cells and
// a full T=3 FAConvLSTM sequence loss, each compared against central
// differences on freshly drawn random instances.

#include <chrono>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "faconv/cell.hpp"
#include "faconv/finite_diff.hpp"
#include "faconv/objectives.hpp"

namespace faconv {

struct GradCheckResult {
  std::string name;
  std::size_t instances = 0;
  double maxRelError = 0.0;
  bool passed = false;
  double seconds = 0.0;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  std::size_t instances = 20;
  double tolerance = 1e-4;
  double step = 1e-5;
};

namespace gradcheck_detail {

// Integer attributes (dilation, heads, groups) travel beside the tensors so
// the finite differences never perturb them.
struct OpInstance {
  std::vector<Tensor4D> inputs;
  std::vector<std::size_t> attrs;
};
using OpBuilder = std::function<Var(Tape&, const std::vector<Var>&, const std::vector<std::size_t>&)>;
using InputSampler = std::function<OpInstance(std::mt19937_64&)>;

// Contracts a non-scalar output with a fixed random tensor so one scalar loss
// exercises the whole Jacobian.
inline Var project(Tape& tape, Var out, const Tensor4D& weights) {
  if (out.value().size() == 1) return out;
  return ad::sum(ad::mul(out, tape.constant(weights)));
}

inline double check_op_instance(const OpInstance& inst, const OpBuilder& op, std::mt19937_64& rng, double step) {
  const auto& inputs = inst.inputs;
  const auto& attrs = inst.attrs;
  Tensor4D weights;
  {
    Tape probe;
    std::vector<Var> leaves;
    for (const auto& in : inputs) leaves.push_back(probe.constant(in));
    weights = random_uniform(op(probe, leaves, attrs).shape(), -1.0, 1.0, rng);
  }
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& in : inputs) leaves.push_back(tape.leaf(in));
  Var loss = project(tape, op(tape, leaves, attrs), weights);
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    auto eval = [&](const Tensor4D& theta) {
      Tape t;
      std::vector<Var> vs;
      for (std::size_t b = 0; b < inputs.size(); ++b) vs.push_back(t.constant(b == a ? theta : inputs[b]));
      return project(t, op(t, vs, attrs), weights).value().item();
    };
    const Tensor4D numeric = finite_diff_grad(eval, inputs[a], step);
    worst = std::max(worst, max_relative_error(tape.grad(leaves[a]), numeric));
  }
  return worst;
}

using ModelLoss = std::function<Var(const Context&)>;

// Shifts every parameter by a random offset so zero-initialised weights do
// not hide gradient paths.
inline void jitter(ParameterStore& store, std::mt19937_64& rng, double amount = 0.3) {
  std::uniform_real_distribution<double> d(-amount, amount);
  for (auto& [_, e] : store)
    for (auto& v : e.value.raw()) v += d(rng);
}

inline double check_model_instance(ParameterStore& store, const ModelLoss& loss_fn, double step) {
  store.zero_grad();
  {
    Tape tape;
    Context ctx{tape, store};
    tape.backward(loss_fn(ctx));
  }
  auto eval = [&]() {
    Tape tape;
    Context ctx{tape, store};
    return loss_fn(ctx).value().item();
  };
  const auto numeric = finite_diff_grad(eval, store, step);
  double worst = 0.0;
  for (const auto& [path, g] : numeric) worst = std::max(worst, max_relative_error(store.grad(path), g));
  return worst;
}

inline Tensor4D spread(Shape s, std::mt19937_64& rng) { return random_uniform(s, -1.0, 1.0, rng); }

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Values bounded away from zero, for ops with a kink at the origin. Also used
// for inputs to a normalized projection: a near-zero input site makes the
// per-site variance collapse and the central difference stops converging.
inline Tensor4D away_from_zero(Shape s, std::mt19937_64& rng) {
  Tensor4D t = random_uniform(s, 0.05, 1.0, rng);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.raw())
    if (sign(rng)) v = -v;
  return t;
}

inline ModelConfig tiny_config(std::mt19937_64& rng) {
  ModelConfig cfg;
  cfg.C = 2;
  cfg.F = 4;
  cfg.Cb = 4;
  cfg.kernelSet = {{3, 1}, {5, 1}, {3, 2}};
  cfg.seRatio = 2;
  cfg.attnInterval = 2;
  cfg.axialHeads = pick(rng, 1, 2);
  cfg.subspaceDim = 4;
  cfg.temporalHeads = pick(rng, 1, 2);
  cfg.pooling = pick(rng, 0, 1) == 0 ? Pooling::Mean : Pooling::Attention;
  cfg.seasonPeriod = 6.0;
  return cfg;
}

}  // namespace gradcheck_detail

inline std::vector<GradCheckResult> run_gradient_suite(const GradCheckOptions& opt = {}) {
  using namespace gradcheck_detail;
  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(opt.seed);

  auto run = [&](const std::string& name, const std::function<double(std::mt19937_64&)>& instance) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckResult r{name, opt.instances, 0.0, false, 0.0};
    for (std::size_t i = 0; i < opt.instances; ++i) r.maxRelError = std::max(r.maxRelError, instance(rng));
    r.passed = r.maxRelError <= opt.tolerance;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(r);
  };
  auto op_check = [&](const std::string& name, InputSampler sample, OpBuilder op) {
    run(name, [&, sample, op](std::mt19937_64& g) { return check_op_instance(sample(g), op, g, opt.step); });
  };

  // ---- tensor-core ops -----------------------------------------------------
  op_check(
      "conv2d_pointwise",
      [](std::mt19937_64& g) {
        const Shape s{pick(g, 1, 2), pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 4)};
        const std::size_t cout = pick(g, 1, 4);
        return OpInstance{{spread(s, g), spread({1, 1, s.c, cout}, g), spread({1, 1, 1, cout}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::pointwise(v[0], v[1], v[2]); });

  op_check(
      "conv2d_depthwise",
      [](std::mt19937_64& g) {
        const std::size_t k = 2 * pick(g, 0, 2) + 1;
        const Shape s{1, pick(g, 2, 5), pick(g, 2, 5), pick(g, 1, 3)};
        return OpInstance{{spread(s, g), spread({1, k, k, s.c}, g)}, {pick(g, 1, 2)}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>& a) {
        return ad::depthwise(v[0], v[1], a[0]);
      });

  op_check(
      "conv2d_full",
      [](std::mt19937_64& g) {
        const std::size_t k = 2 * pick(g, 0, 1) + 1;
        const Shape s{1, pick(g, 2, 4), pick(g, 2, 4), pick(g, 1, 3)};
        const std::size_t cout = pick(g, 1, 3);
        return OpInstance{{spread(s, g), spread({k, k, s.c, cout}, g), spread({1, 1, 1, cout}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::conv_full(v[0], v[1], v[2]); });

  op_check(
      "global_avg_pool",
      [](std::mt19937_64& g) {
        return OpInstance{{spread({pick(g, 1, 2), pick(g, 1, 4), pick(g, 1, 4), pick(g, 1, 3)}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::global_avg_pool(v[0]); });

  op_check(
      "layer_norm",
      [](std::mt19937_64& g) {
        const std::size_t groups = pick(g, 1, 2);
        const std::size_t c = groups * pick(g, 2, 3);
        return OpInstance{{spread({1, pick(g, 1, 3), pick(g, 1, 3), c}, g), spread({1, 1, 1, c}, g),
                           spread({1, 1, 1, c}, g)},
                          {groups}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>& a) {
        return ad::group_norm(v[0], v[1], v[2], a[0], 1e-5);
      });

  op_check(
      "elementwise_activations",
      [](std::mt19937_64& g) {
        const Shape s{1, pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)};
        return OpInstance{{away_from_zero(s, g), spread(s, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) {
        Var a = ad::relu(v[0]);
        Var b = ad::mul(ad::sigmoid(v[1]), ad::tanh(v[0]));
        return ad::add(ad::sub(a, ad::scale(b, 0.7)), ad::mul(v[0], v[1]));
      });

  op_check(
      "mul_channel",
      [](std::mt19937_64& g) {
        const Shape s{pick(g, 1, 2), pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)};
        const std::size_t gn = pick(g, 0, 1) == 0 ? 1 : s.n;
        return OpInstance{{spread(s, g), spread({gn, 1, 1, s.c}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::mul_channel(v[0], v[1]); });

  op_check(
      "concat_slice",
      [](std::mt19937_64& g) {
        const Shape s{1, pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)};
        return OpInstance{{spread(s, g), spread({1, s.h, s.w, pick(g, 1, 3)}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) {
        Var c = ad::concat_channels(v[0], v[1]);
        return ad::slice_channels(c, 1, c.shape().c - 1);
      });

  op_check(
      "stack_rows",
      [](std::mt19937_64& g) {
        const std::size_t D = pick(g, 1, 4);
        std::vector<Tensor4D> rows;
        for (std::size_t i = 0, T = pick(g, 1, 4); i < T; ++i) rows.push_back(spread({1, 1, 1, D}, g));
        return OpInstance{rows, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::stack_rows(v); });

  for (auto axis : {kernels::Axis::Width, kernels::Axis::Height}) {
    op_check(
        axis == kernels::Axis::Width ? "attention_rows" : "attention_cols",
        [](std::mt19937_64& g) {
          const std::size_t heads = pick(g, 1, 2);
          const Shape s{pick(g, 1, 2), pick(g, 1, 3), pick(g, 1, 3), heads * pick(g, 1, 2)};
          return OpInstance{{spread(s, g), spread(s, g), spread(s, g)}, {heads}};
        },
        [axis](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>& a) {
          return ad::axis_attention(v[0], v[1], v[2], a[0], axis);
        });
  }

  op_check(
      "attention_pool",
      [](std::mt19937_64& g) {
        const Shape s{pick(g, 1, 2), pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)};
        return OpInstance{{spread(s, g), spread({s.n, s.h, s.w, 1}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::attention_pool(v[0], v[1]); });

  op_check(
      "mse",
      [](std::mt19937_64& g) {
        const Shape s{1, pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)};
        return OpInstance{{spread(s, g), spread(s, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::mse(v[0], v[1]); });

  op_check(
      "laplacian_energy",
      [](std::mt19937_64& g) {
        return OpInstance{{spread({1, pick(g, 1, 4), pick(g, 1, 4), pick(g, 1, 3)}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::laplacian_energy(v[0]); });

  op_check(
      "row_difference_energy",
      [](std::mt19937_64& g) { return OpInstance{{spread({1, 1, pick(g, 1, 5), pick(g, 1, 4)}, g)}, {}}; },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) { return ad::row_difference_energy(v[0]); });

  op_check(
      "dropout_train_mode",
      [](std::mt19937_64& g) {
        return OpInstance{{spread({1, pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)}, g)}, {}};
      },
      [](Tape&, const std::vector<Var>& v, const std::vector<std::size_t>&) {
        std::mt19937_64 mask_rng(7);
        return ad::dropout(v[0], 0.5, true, mask_rng);
      });

  // ---- blocks, cells, objectives (gradients w.r.t. parameters) -------------
  auto model_check = [&](const std::string& name,
                         const std::function<std::pair<ParameterStore, ModelLoss>(std::mt19937_64&)>& make) {
    run(name, [&, make](std::mt19937_64& g) {
      auto [store, loss] = make(g);
      jitter(store, g);
      return check_model_instance(store, loss, opt.step);
    });
  };

  model_check("bottleneck_project", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    cfg.normGroups = pick(g, 1, 2);
    cfg.Cb = 3 * cfg.normGroups;
    ParameterStore store;
    init_bottleneck(store, "b", cfg.C, cfg, g);
    const Tensor4D x = away_from_zero({1, 3, 3, cfg.C}, g), w = spread({1, 3, 3, cfg.Cb}, g);
    ModelLoss loss = [cfg, x, w](const Context& ctx) {
      return project(ctx.tape, bottleneck_project(ctx, ctx.tape.constant(x), "b", cfg), w);
    };
    return std::pair{std::move(store), loss};
  });

  model_check("multiscale_depthwise_mix", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    ParameterStore store;
    init_multiscale(store, "m", 4, cfg, g);
    const Tensor4D x = spread({1, 4, 4, 4}, g), w = spread({1, 4, 4, 4}, g);
    ModelLoss loss = [cfg, x, w](const Context& ctx) {
      return project(ctx.tape, multiscale_depthwise_mix(ctx, ctx.tape.constant(x), "m", cfg.kernelSet), w);
    };
    return std::pair{std::move(store), loss};
  });

  model_check("se_recalibrate", [](std::mt19937_64& g) {
    ParameterStore store;
    init_se(store, "se", 4, 2, g);
    const Tensor4D x = spread({1, 3, 3, 4}, g), w = spread({1, 3, 3, 4}, g);
    ModelLoss loss = [x, w](const Context& ctx) {
      return project(ctx.tape, se_recalibrate(ctx, ctx.tape.constant(x), "se"), w);
    };
    return std::pair{std::move(store), loss};
  });

  model_check("axial_attention", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    cfg.shareAxialProjections = pick(g, 0, 1) == 0;
    ParameterStore store;
    init_axial(store, "ax", cfg, g);
    const Tensor4D x = spread({1, 3, 3, cfg.F}, g), w = spread({1, 3, 3, cfg.F}, g);
    ModelLoss loss = [cfg, x, w](const Context& ctx) {
      return project(ctx.tape, axial_attention(ctx, ctx.tape.constant(x), "ax", cfg), w);
    };
    return std::pair{std::move(store), loss};
  });

  model_check("temporal_mha", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    ParameterStore store;
    init_temporal_mha(store, "mha", cfg.subspaceDim, g);
    const std::size_t T = pick(g, 1, 4);
    const Tensor4D S = spread({1, 1, T, cfg.subspaceDim}, g), w = spread({1, 1, T, cfg.subspaceDim}, g);
    const Tensor4D P = sinusoidal_encoding(T, cfg.subspaceDim, cfg.seasonPeriod);
    ModelLoss loss = [cfg, S, P, w](const Context& ctx) {
      return project(ctx.tape, temporal_mha(ctx, ctx.tape.constant(S), P, "mha", cfg.temporalHeads, true), w);
    };
    return std::pair{std::move(store), loss};
  });

  model_check("subspace_embed", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    ParameterStore store;
    init_subspace(store, "sub", cfg, g);
    const Tensor4D h = spread({1, 3, 3, cfg.F}, g), w = spread({1, 1, 1, cfg.subspaceDim}, g);
    ModelLoss loss = [cfg, h, w](const Context& ctx) {
      return project(ctx.tape, subspace_embed(ctx, ctx.tape.constant(h), "sub", cfg.pooling), w);
    };
    return std::pair{std::move(store), loss};
  });

  model_check("fa_cell_step", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    FAConvLSTM layer(cfg);
    ParameterStore store;
    layer.init(store, g);
    const Tensor4D x = away_from_zero({1, 4, 4, cfg.C}, g), h0 = spread({1, 4, 4, cfg.F}, g), c0 = spread({1, 4, 4, cfg.F}, g);
    const Tensor4D wh = spread({1, 4, 4, cfg.F}, g), wc = spread({1, 4, 4, cfg.F}, g);
    ModelLoss loss = [layer, x, h0, c0, wh, wc](const Context& ctx) {
      auto& t = ctx.tape;
      auto s = layer.step(ctx, t.constant(x), {t.constant(h0), t.constant(c0)});
      return ad::add(project(t, s.hidden, wh), project(t, s.cell, wc));
    };
    return std::pair{std::move(store), loss};
  });

  model_check("convlstm2d_step", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    ConvLSTM2D layer(cfg);
    ParameterStore store;
    layer.init(store, g);
    const Tensor4D x = spread({1, 3, 3, cfg.C}, g), h0 = spread({1, 3, 3, cfg.F}, g), c0 = spread({1, 3, 3, cfg.F}, g);
    const Tensor4D wh = spread({1, 3, 3, cfg.F}, g), wc = spread({1, 3, 3, cfg.F}, g);
    ModelLoss loss = [layer, x, h0, c0, wh, wc](const Context& ctx) {
      auto& t = ctx.tape;
      auto s = layer.step(ctx, t.constant(x), {t.constant(h0), t.constant(c0)});
      return ad::add(project(t, s.hidden, wh), project(t, s.cell, wc));
    };
    return std::pair{std::move(store), loss};
  });

  op_check(
      "objectives",
      [](std::mt19937_64& g) {
        const std::size_t T = pick(g, 1, 3);
        std::vector<Tensor4D> v;
        for (std::size_t t = 0; t < T; ++t) v.push_back(spread({1, 3, 3, 2}, g));  // hidden
        v.push_back(spread({1, 1, T, 3}, g));                                      // embeddings
        return OpInstance{v, {}};
      },
      [](Tape& tape, const std::vector<Var>& v, const std::vector<std::size_t>&) {
        std::vector<Var> hidden(v.begin(), v.end() - 1);
        Var spatial = laplacian_smoothness(hidden, true);
        Var temporal = temporal_consistency(v.back());
        Var task = ad::mean(ad::mul(hidden.front(), hidden.front()));
        (void)tape;
        return composite_objective(task, spatial, temporal, ObjectiveWeights{0.3, 0.7});
      });

  model_check("fa_sequence_T3", [](std::mt19937_64& g) {
    ModelConfig cfg = tiny_config(g);
    FAConvLSTM layer(cfg);
    Decoder decoder;
    ParameterStore store;
    layer.init(store, g);
    decoder.init(store, cfg.F, cfg.C, g);
    std::vector<Tensor4D> xs;
    for (int t = 0; t < 3; ++t) xs.push_back(away_from_zero({1, 4, 4, cfg.C}, g));
    const Tensor4D wz = spread({1, 1, 3, cfg.subspaceDim}, g);
    ModelLoss loss = [layer, decoder, xs, wz](const Context& ctx) {
      auto out = layer.forward(ctx, xs);
      Var task = reconstruction_loss(ctx.tape, ctx.store, xs, out.hidden, decoder);
      Var total = composite_objective(task, laplacian_smoothness(out.hidden), temporal_consistency(out.S),
                                      ObjectiveWeights{0.5, 0.5});
      return ad::add(total, project(ctx.tape, out.Z, wz));
    };
    return std::pair{std::move(store), loss};
  });

  return results;
}

}  // namespace faconv
