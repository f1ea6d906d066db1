#include <random>

#include <gtest/gtest.h>

#include "faconv/bench.hpp"

using namespace faconv;

namespace {

std::uint64_t store_size(Architecture arch, const ModelConfig& cfg) {
  ParameterStore store;
  std::mt19937_64 rng(1);
  SpatioTemporalModel(arch, cfg).init(store, rng);
  // The decoder belongs to the training objective, not the layer.
  return store.total_size() - store.size_under("decoder/");
}

}  // namespace

TEST(CountParams, BaselineExample) {
  ModelConfig cfg;
  cfg.C = 2;
  cfg.F = 4;
  cfg.baselineKernel = 3;
  EXPECT_EQ(count_params(Architecture::ConvLSTM2D, cfg), 880u);
  ParameterStore store;
  std::mt19937_64 rng(1);
  ConvLSTM2D(cfg).init(store, rng);
  EXPECT_EQ(store.total_size(), 880u);
}

TEST(CountParams, MatchesStoreEnumeration) {
  std::vector<ModelConfig> configs;
  configs.emplace_back();
  ModelConfig pw;
  pw.kernelSet = {{1, 1}};
  pw.Cb = pw.F;
  configs.push_back(pw);
  ModelConfig variant;
  variant.pooling = Pooling::Attention;
  variant.shareAxialProjections = false;
  variant.peepholes = false;
  variant.seRatio = 1;
  configs.push_back(variant);
  ModelConfig noaxial;
  noaxial.axialEnabled = false;
  noaxial.C = 3;
  noaxial.Cb = 6;
  noaxial.kernelSet = {{3, 1}, {7, 3}};
  configs.push_back(noaxial);
  for (const auto& cfg : configs) {
    const auto head = head_params(cfg);
    EXPECT_EQ(count_params(Architecture::FAConvLSTM, cfg), store_size(Architecture::FAConvLSTM, cfg));
    EXPECT_EQ(count_params(Architecture::ConvLSTM2D, cfg) + head, store_size(Architecture::ConvLSTM2D, cfg));
  }
}

TEST(CountParams, ZeroBottleneckIsConfigError) {
  ModelConfig cfg;
  cfg.Cb = 0;
  EXPECT_THROW(count_params(Architecture::FAConvLSTM, cfg), ConfigError);
}

TEST(DominantTerms, ReproduceTheClaimedRatio) {
  EXPECT_EQ(convlstm_dominant_term(3, 8, 32), 11520u);
  EXPECT_EQ(faconvlstm_dominant_term(3, 8, 32, 8), 896u);
  EXPECT_EQ(dominant_term_ratio(3, 8, 32, 8), 11520.0 / 896.0);
  EXPECT_NEAR(dominant_term_ratio(3, 8, 32, 8), 12.857142857142858, 1e-12);
}

TEST(CountFlops, DoublingTDoublesRecurrentMacs) {
  ModelConfig cfg;
  cfg.attnInterval = 4;
  for (auto arch : {Architecture::FAConvLSTM, Architecture::ConvLSTM2D}) {
    EXPECT_EQ(count_flops(arch, cfg, 8, 8, 16).macs, 2 * count_flops(arch, cfg, 8, 8, 8).macs);
  }
  const auto r = count_flops(Architecture::FAConvLSTM, cfg, 8, 8, 7);
  EXPECT_EQ(r.refinements, 1u);
  EXPECT_THROW(count_flops(Architecture::FAConvLSTM, cfg, 0, 8, 7), ArgumentError);
}

TEST(CountFlops, ComponentsSumToTotal) {
  ModelConfig cfg;
  const auto r = count_flops(Architecture::FAConvLSTM, cfg, 6, 5, 9);
  EXPECT_EQ(r.macs, r.bottleneckMacs + r.branchMacs + r.seMacs + r.gateMacs + r.axialMacs);
}

TEST(Bench, CountersMatchClosedFormAcrossDefaultSweep) {
  const auto cases = default_sweep();
  ASSERT_EQ(cases.size(), 16u);
  const auto rows = run_bench(cases);
  ASSERT_EQ(rows.size(), 32u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.macsMeasured, r.closed.macs) << to_string(r.arch) << " Cb=" << r.bench.cfg.Cb;
    EXPECT_EQ(r.paramsMeasured, r.closed.params);
    if (r.arch == Architecture::FAConvLSTM) {
      EXPECT_EQ(r.headMacsMeasured, r.closed.headMacs);
      EXPECT_EQ(r.refinementsMeasured, r.closed.refinements);
    }
  }
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    if (efficiency_asserted(rows[i].bench)) EXPECT_LT(rows[i].closed.macs, rows[i + 1].closed.macs);
    EXPECT_GT(rows[i].ratioVsBaseline, efficiency_asserted(rows[i].bench) ? 1.0 : 0.0);
  }
}

TEST(Bench, FaCostFallsWithBottleneckWidth) {
  const auto cases = default_sweep();
  for (std::size_t g = 0; g < cases.size(); g += 4) {
    for (std::size_t i = g + 1; i < g + 4; ++i) {
      ASSERT_LT(cases[i - 1].cfg.Cb, cases[i].cfg.Cb);
      const auto lo = count_flops(Architecture::FAConvLSTM, cases[i - 1].cfg, cases[i].H, cases[i].W, cases[i].T);
      const auto hi = count_flops(Architecture::FAConvLSTM, cases[i].cfg, cases[i].H, cases[i].W, cases[i].T);
      EXPECT_LT(lo.macs, hi.macs);
    }
  }
}

TEST(Bench, FullBottleneckIsNotAsserted) {
  BenchCase b;
  b.cfg.F = 32;
  b.cfg.Cb = 32;
  EXPECT_FALSE(efficiency_asserted(b));
  b.cfg.Cb = 16;
  EXPECT_TRUE(efficiency_asserted(b));
  b.cfg.kernelSet = {{7, 1}};
  EXPECT_FALSE(efficiency_asserted(b));
}

TEST(Bench, AxialAdvantageGrowsWithGrid) {
  ModelConfig cfg;
  cfg.F = 32;
  // Projections dominate on small grids; the quadratic term wins as S grows.
  EXPECT_EQ(axial_macs_per_refinement(8, 8, cfg), full_attention_macs(8, 8, cfg));
  double prev = 1.0;
  for (std::size_t g : {16u, 32u, 64u}) {
    const double ratio = static_cast<double>(full_attention_macs(g, g, cfg)) /
                         static_cast<double>(axial_macs_per_refinement(g, g, cfg));
    EXPECT_GT(ratio, prev);
    prev = ratio;
  }
}

TEST(Bench, CsvHasHeaderAndOneRowPerMeasurement) {
  const auto rows = run_bench(small_sweep());
  std::ostringstream os;
  write_bench_csv(os, rows);
  const auto s = os.str();
  EXPECT_NE(s.find("arch,C,F,C_b,k_set,H,W,T,K_t,params,macs,dominant_term,ratio_vs_baseline"), std::string::npos);
  std::size_t data_rows = 0;
  std::istringstream is(s);
  for (std::string line; std::getline(is, line);)
    if (line.starts_with("faconvlstm,") || line.starts_with("convlstm2d,")) ++data_rows;
  EXPECT_EQ(data_rows, rows.size());
  EXPECT_EQ(kernel_set_string({{3, 1}, {5, 1}, {3, 2}}), "3d1;5d1;3d2");
}
