#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "faconv/cell.hpp"
#include "support/naive.hpp"

using namespace faconv;

namespace {

ModelConfig cell_config() {
  ModelConfig c;
  c.C = 2;
  c.F = 3;
  c.Cb = 2;
  c.axialHeads = 1;
  c.subspaceDim = 4;
  c.temporalHeads = 2;
  c.seRatio = 2;
  return c;
}

void randomize(ParameterStore& store, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [_, e] : store)
    for (auto& v : e.value.raw()) v = u(rng);
}

void zero_all(ParameterStore& store) {
  for (auto& [_, e] : store) e.value.fill(0.0);
}

std::vector<Tensor4D> random_sequence(std::size_t T, Shape s, std::mt19937_64& rng) {
  std::vector<Tensor4D> xs;
  for (std::size_t t = 0; t < T; ++t) xs.push_back(naive::random(s, rng));
  return xs;
}

// Straight-line FAConvLSTM step composed from the block oracles.
naive::State reference_fa_step(const ParameterStore& p, const ModelConfig& cfg, const Tensor4D& x,
                               const naive::State& prev) {
  auto bottleneck = [&](const Tensor4D& in, const std::string& pre) {
    return naive::layer_norm(naive::pointwise(in, p.value(pre + "/weight"), nullptr), p.value(pre + "/gamma"),
                             p.value(pre + "/beta"), cfg.normEps);
  };
  const auto u = naive::concat(bottleneck(x, "fa/bx"), bottleneck(prev.h, "fa/bh"));
  Tensor4D d(u.shape());
  for (std::size_t i = 0; i < cfg.kernelSet.size(); ++i)
    d = naive::add(d, naive::depthwise(u, p.value(branch_path("fa/mix", i)), cfg.kernelSet[i].dilation));
  d = naive::se(d, p.value("fa/se/w1"), p.value("fa/se/w2"));
  d = naive::layer_norm(d, p.value("fa/ln/gamma"), p.value("fa/ln/beta"), cfg.normEps);
  const auto gates = naive::pointwise(d, p.value("fa/gates/weight"), &p.value("fa/gates/bias"));
  const Tensor4D* wci = cfg.peepholes ? &p.value("fa/peep/wci") : nullptr;
  const Tensor4D* wcf = cfg.peepholes ? &p.value("fa/peep/wcf") : nullptr;
  return naive::lstm(gates, prev.c, wci, wcf);
}

naive::State reference_convlstm_step(const ParameterStore& p, const Tensor4D& x, const naive::State& prev) {
  const auto gates = naive::add(naive::full(x, p.value("convlstm/wx"), &p.value("convlstm/bias")),
                                naive::full(prev.h, p.value("convlstm/wh"), nullptr));
  return naive::lstm(gates, prev.c, nullptr, nullptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// FAConvLSTM step

TEST(FaCell, AllZeroParametersKeepZeroState) {
  const auto cfg = cell_config();
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(1);
  cell.init(store, rng);
  zero_all(store);
  Tape tape;
  Context ctx{tape, store};
  const auto s = cell.step(ctx, tape.constant(naive::random({1, 4, 4, cfg.C}, rng)), cell.zero_state(tape, 4, 4));
  for (double v : s.cell.value().raw()) EXPECT_EQ(v, 0.0);
  for (double v : s.hidden.value().raw()) EXPECT_EQ(v, 0.0);
}

TEST(FaCell, ZeroGatesHalveConstantCell) {
  const auto cfg = cell_config();
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(2);
  cell.init(store, rng);
  store.value("fa/gates/weight").fill(0.0);
  store.value("fa/gates/bias").fill(0.0);
  const double c = 0.8;
  Tape tape;
  Context ctx{tape, store};
  CellState prev{tape.constant(naive::random({1, 4, 4, cfg.F}, rng)), tape.constant(Tensor4D({1, 4, 4, cfg.F}, c))};
  const auto s = cell.step(ctx, tape.constant(naive::random({1, 4, 4, cfg.C}, rng)), prev);
  for (double v : s.cell.value().raw()) EXPECT_DOUBLE_EQ(v, 0.5 * c);
  for (double v : s.hidden.value().raw()) EXPECT_DOUBLE_EQ(v, 0.5 * std::tanh(0.5 * c));
}

TEST(FaCell, MatchesCompositionOfOracles) {
  const auto cfg = cell_config();
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(3);
  cell.init(store, rng);
  randomize(store, rng);
  const auto x = naive::random({1, 4, 4, cfg.C}, rng);
  const naive::State prev{naive::random({1, 4, 4, cfg.F}, rng), naive::random({1, 4, 4, cfg.F}, rng)};
  Tape tape;
  Context ctx{tape, store};
  const auto s = cell.step(ctx, tape.constant(x), {tape.constant(prev.h), tape.constant(prev.c)});
  const auto ref = reference_fa_step(store, cfg, x, prev);
  EXPECT_LE(max_abs_diff(s.hidden.value(), ref.h), 1e-12);
  EXPECT_LE(max_abs_diff(s.cell.value(), ref.c), 1e-12);
}

TEST(FaCell, ZeroPeepholesMatchNoPeepholeCellBitwise) {
  auto cfg = cell_config();
  FAConvLSTM with(cfg);
  cfg.peepholes = false;
  FAConvLSTM without(cfg);
  ParameterStore a, b;
  std::mt19937_64 r1(4), r2(4);
  with.init(a, r1);
  without.init(b, r2);
  for (auto& [path, e] : b) e.value = a.value(path);
  std::mt19937_64 rng(5);
  const auto xs = random_sequence(4, {1, 4, 4, cfg.C}, rng);
  Tape t1, t2;
  const auto o1 = with.forward(Context{t1, a}, xs);
  const auto o2 = without.forward(Context{t2, b}, xs);
  for (std::size_t t = 0; t < xs.size(); ++t) EXPECT_EQ(o1.hidden[t].value().raw(), o2.hidden[t].value().raw());
  EXPECT_EQ(o1.Z.value().raw(), o2.Z.value().raw());
}

TEST(FaCell, StateShapeMismatchIsDimensionError) {
  const auto cfg = cell_config();
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(6);
  cell.init(store, rng);
  Tape tape;
  Context ctx{tape, store};
  EXPECT_THROW(cell.step(ctx, tape.constant(Tensor4D({1, 4, 4, cfg.C + 1})), cell.zero_state(tape, 4, 4)),
               DimensionError);
  EXPECT_THROW(cell.step(ctx, tape.constant(Tensor4D({1, 4, 4, cfg.C})), cell.zero_state(tape, 3, 4)),
               DimensionError);
}

TEST(FaCell, BoundedStates) {
  const auto cfg = cell_config();
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(7);
  cell.init(store, rng);
  randomize(store, rng, 2.0);
  const auto xs = random_sequence(8, {1, 4, 4, cfg.C}, rng);
  Tape tape;
  Context ctx{tape, store};
  CellState s = cell.zero_state(tape, 4, 4);
  for (std::size_t t = 1; t <= xs.size(); ++t) {
    s = cell.step(ctx, tape.constant(xs[t - 1]), s);
    for (double v : s.hidden.value().raw()) EXPECT_LT(std::abs(v), 1.0);
    for (double v : s.cell.value().raw()) EXPECT_LE(std::abs(v), static_cast<double>(t));
  }
}

TEST(FaCell, InputChannelPermutationEquivariance) {
  const auto cfg = cell_config();
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(8);
  cell.init(store, rng);
  const auto xs = random_sequence(3, {1, 4, 4, cfg.C}, rng);
  Tape t1;
  const auto o1 = cell.forward(Context{t1, store}, xs);
  auto swapped = xs;
  for (auto& x : swapped)
    for (std::size_t s = 0; s < 16; ++s) std::swap(x[s * 2], x[s * 2 + 1]);
  auto& w = store.value("fa/bx/weight");
  for (std::size_t q = 0; q < cfg.Cb; ++q) std::swap(w.at(0, q), w.at(1, q));
  Tape t2;
  const auto o2 = cell.forward(Context{t2, store}, swapped);
  for (std::size_t t = 0; t < xs.size(); ++t) EXPECT_LE(max_abs_diff(o1.hidden[t].value(), o2.hidden[t].value()), 1e-14);
}

// ---------------------------------------------------------------------------
// FAConvLSTM sequence

TEST(FaSequence, SingleStepSkipsAxialAndUsesSingleTokenPath) {
  auto cfg = cell_config();
  cfg.attnInterval = 2;
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(9);
  cell.init(store, rng);
  const auto xs = random_sequence(1, {1, 4, 4, cfg.C}, rng);
  Tape tape;
  const auto out = cell.forward(Context{tape, store}, xs);
  EXPECT_EQ(out.axialRefinements, 0u);
  const auto x = naive::add(out.S.value(), sinusoidal_encoding(1, cfg.subspaceDim, cfg.seasonPeriod));
  const auto expected = naive::add(x, naive::pointwise(naive::pointwise(x, store.value("fa/head/mha/wv"), nullptr),
                                                       store.value("fa/head/mha/wo"), nullptr));
  EXPECT_LE(max_abs_diff(out.Z.value(), expected), 1e-14);
}

TEST(FaSequence, ZeroAxialProjectionEqualsAxialDisabled) {
  auto cfg = cell_config();
  cfg.attnInterval = 1;
  FAConvLSTM on(cfg);
  ParameterStore a;
  std::mt19937_64 r1(10);
  on.init(a, r1);
  a.value("fa/axial/wo").fill(0.0);
  cfg.axialEnabled = false;
  FAConvLSTM off(cfg);
  ParameterStore b;
  std::mt19937_64 r2(10);
  off.init(b, r2);
  for (auto& [path, e] : b) e.value = a.value(path);
  std::mt19937_64 rng(11);
  const auto xs = random_sequence(4, {1, 4, 4, cfg.C}, rng);
  Tape t1, t2;
  const auto o1 = on.forward(Context{t1, a}, xs);
  const auto o2 = off.forward(Context{t2, b}, xs);
  EXPECT_EQ(o1.axialRefinements, 4u);
  EXPECT_EQ(o2.axialRefinements, 0u);
  for (std::size_t t = 0; t < xs.size(); ++t) EXPECT_EQ(o1.hidden[t].value().raw(), o2.hidden[t].value().raw());
  EXPECT_EQ(o1.S.value().raw(), o2.S.value().raw());
  EXPECT_EQ(o1.Z.value().raw(), o2.Z.value().raw());
}

TEST(FaSequence, RefinementCountIsFloorOfTOverInterval) {
  for (std::size_t T : {1u, 5u, 6u, 7u}) {
    for (std::size_t K : {1u, 2u, 3u}) {
      auto cfg = cell_config();
      cfg.attnInterval = K;
      FAConvLSTM cell(cfg);
      ParameterStore store;
      std::mt19937_64 rng(12);
      cell.init(store, rng);
      Tape tape;
      const auto out = cell.forward(Context{tape, store}, random_sequence(T, {1, 3, 3, cfg.C}, rng));
      EXPECT_EQ(out.axialRefinements, T / K) << "T=" << T << " K=" << K;
      EXPECT_EQ(out.hidden.size(), T);
      EXPECT_EQ(out.S.value().rows(), T);
      EXPECT_EQ(out.Z.value().rows(), T);
    }
  }
}

TEST(FaSequence, RefinementAtStepsThreeAndSixFeedsTheState) {
  auto cfg = cell_config();
  cfg.attnInterval = 3;
  FAConvLSTM cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(13);
  cell.init(store, rng);
  const auto xs = random_sequence(6, {1, 4, 4, cfg.C}, rng);
  Tape tape;
  Context ctx{tape, store};
  const auto out = cell.forward(ctx, xs);
  EXPECT_EQ(out.axialRefinements, 2u);
  // Reference: run the steps by hand, refining exactly at t = 3 and t = 6.
  CellState s = cell.zero_state(tape, 4, 4);
  for (std::size_t t = 1; t <= 6; ++t) {
    s = cell.step(ctx, tape.constant(xs[t - 1]), s);
    if (t == 3 || t == 6) s.hidden = cell.axial_refine(ctx, s.hidden);
    EXPECT_EQ(s.hidden.value().raw(), out.hidden[t - 1].value().raw()) << t;
  }
}

TEST(FaSequence, EmptySequenceIsArgumentError) {
  FAConvLSTM cell(cell_config());
  ParameterStore store;
  std::mt19937_64 rng(14);
  cell.init(store, rng);
  Tape tape;
  EXPECT_THROW(cell.forward(Context{tape, store}, {}), ArgumentError);
}

TEST(FaSequence, DeterministicForSameSeed) {
  auto run = [] {
    const auto cfg = cell_config();
    FAConvLSTM cell(cfg);
    ParameterStore store;
    std::mt19937_64 rng(15);
    cell.init(store, rng);
    Tape tape;
    return cell.forward(Context{tape, store}, random_sequence(4, {1, 4, 4, cfg.C}, rng)).Z.value().raw();
  };
  EXPECT_EQ(run(), run());
}

// ---------------------------------------------------------------------------
// ConvLSTM2D baseline

TEST(ConvLstm, ZeroWeightsKeepZeroState) {
  const auto cfg = cell_config();
  ConvLSTM2D cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(16);
  cell.init(store, rng);
  zero_all(store);
  Tape tape;
  Context ctx{tape, store};
  const auto s = cell.step(ctx, tape.constant(naive::random({1, 4, 4, cfg.C}, rng)), cell.zero_state(tape, 4, 4));
  for (double v : s.hidden.value().raw()) EXPECT_EQ(v, 0.0);
  for (double v : s.cell.value().raw()) EXPECT_EQ(v, 0.0);
}

TEST(ConvLstm, KernelOneMatchesPointwiseComposition) {
  auto cfg = cell_config();
  cfg.baselineKernel = 1;
  ConvLSTM2D cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(17);
  cell.init(store, rng);
  randomize(store, rng);
  const auto x = naive::random({1, 3, 3, cfg.C}, rng);
  const naive::State prev{naive::random({1, 3, 3, cfg.F}, rng), naive::random({1, 3, 3, cfg.F}, rng)};
  Tape tape;
  Context ctx{tape, store};
  const auto s = cell.step(ctx, tape.constant(x), {tape.constant(prev.h), tape.constant(prev.c)});
  const auto gates = naive::add(naive::pointwise(x, store.value("convlstm/wx"), &store.value("convlstm/bias")),
                                naive::pointwise(prev.h, store.value("convlstm/wh"), nullptr));
  const auto ref = naive::lstm(gates, prev.c, nullptr, nullptr);
  EXPECT_LE(max_abs_diff(s.hidden.value(), ref.h), 1e-12);
  EXPECT_LE(max_abs_diff(s.cell.value(), ref.c), 1e-12);
}

TEST(ConvLstm, MatchesStraightLineReferenceOverSequence) {
  const auto cfg = cell_config();
  ConvLSTM2D cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(18);
  cell.init(store, rng);
  randomize(store, rng);
  const auto xs = random_sequence(3, {1, 4, 5, cfg.C}, rng);
  Tape tape;
  const auto hidden = cell.forward(Context{tape, store}, xs);
  naive::State s{Tensor4D({1, 4, 5, cfg.F}), Tensor4D({1, 4, 5, cfg.F})};
  for (std::size_t t = 0; t < xs.size(); ++t) {
    s = reference_convlstm_step(store, xs[t], s);
    EXPECT_LE(max_abs_diff(hidden[t].value(), s.h), 1e-12);
  }
}

TEST(ConvLstm, ForgetBiasInitialization) {
  auto cfg = cell_config();
  cfg.forgetBias = 1.0;
  ConvLSTM2D cell(cfg);
  ParameterStore store;
  std::mt19937_64 rng(19);
  cell.init(store, rng);
  const auto& b = store.value("convlstm/bias");
  for (std::size_t q = 0; q < 4 * cfg.F; ++q) EXPECT_EQ(b[q], q >= cfg.F && q < 2 * cfg.F ? 1.0 : 0.0);
  cfg.baselineKernel = 2;
  EXPECT_THROW(ConvLSTM2D{cfg}, ConfigError);
}
