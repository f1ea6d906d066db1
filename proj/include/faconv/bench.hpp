#pragma once

// Cost-model sweep: closed-form parameter and MAC counts next to counts
// measured by running the models with the MAC counter armed.

#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "faconv/model.hpp"

namespace faconv {

struct BenchCase {
  ModelConfig cfg;
  std::size_t H = 16, W = 16, T = 8;
};

struct BenchRow {
  Architecture arch = Architecture::FAConvLSTM;
  BenchCase bench;
  CostReport closed;
  std::uint64_t paramsMeasured = 0;
  std::uint64_t macsMeasured = 0;  // recurrent core
  std::uint64_t headMacsMeasured = 0;
  std::size_t refinementsMeasured = 0;
  double ratioVsBaseline = 1.0;  // baseline MACs / these MACs
};

// 16 configurations: C_b in {2,4,8,16} x two kernel sets x two grids, with
// C = 8, F = 32, T = 8, K_t = 4.
inline std::vector<BenchCase> default_sweep() {
  std::vector<BenchCase> out;
  const std::vector<std::vector<KernelBranch>> ksets{{{3, 1}, {5, 1}, {3, 2}}, {{3, 1}, {3, 2}}};
  for (std::size_t grid : {8, 16})
    for (const auto& ks : ksets)
      for (std::size_t cb : {2, 4, 8, 16}) {
        BenchCase b;
        b.cfg.C = 8;
        b.cfg.F = 32;
        b.cfg.Cb = cb;
        b.cfg.kernelSet = ks;
        b.cfg.attnInterval = 4;
        b.cfg.subspaceDim = 8;
        b.H = b.W = grid;
        b.T = 8;
        out.push_back(b);
      }
  return out;
}

// A tiny sweep for smoke runs.
inline std::vector<BenchCase> small_sweep() {
  std::vector<BenchCase> out;
  for (std::size_t cb : {2, 4}) {
    BenchCase b;
    b.cfg.C = 2;
    b.cfg.F = 8;
    b.cfg.Cb = cb;
    b.cfg.subspaceDim = 4;
    b.H = b.W = 4;
    b.T = 4;
    b.cfg.attnInterval = 2;
    out.push_back(b);
  }
  return out;
}

inline std::vector<Tensor4D> bench_inputs(const BenchCase& b, std::mt19937_64& rng) {
  std::vector<Tensor4D> xs;
  for (std::size_t t = 0; t < b.T; ++t) xs.push_back(random_uniform({1, b.H, b.W, b.cfg.C}, -1.0, 1.0, rng));
  return xs;
}

inline BenchRow measure_faconvlstm(const BenchCase& b, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  FAConvLSTM layer(b.cfg);
  ParameterStore store;
  layer.init(store, rng);
  const auto xs = bench_inputs(b, rng);
  Tape tape;
  Context ctx{tape, store};
  const auto out = layer.forward(ctx, xs);
  BenchRow r;
  r.arch = Architecture::FAConvLSTM;
  r.bench = b;
  r.closed = count_flops(Architecture::FAConvLSTM, b.cfg, b.H, b.W, b.T);
  r.paramsMeasured = store.total_size();
  r.macsMeasured = out.coreMacs;
  r.headMacsMeasured = out.headMacs;
  r.refinementsMeasured = out.axialRefinements;
  return r;
}

inline BenchRow measure_convlstm2d(const BenchCase& b, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  ConvLSTM2D layer(b.cfg);
  ParameterStore store;
  layer.init(store, rng);
  const auto xs = bench_inputs(b, rng);
  Tape tape;
  Context ctx{tape, store};
  BenchRow r;
  {
    MacScope scope;
    layer.forward(ctx, xs);
    r.macsMeasured = scope.elapsed();
  }
  r.arch = Architecture::ConvLSTM2D;
  r.bench = b;
  r.closed = count_flops(Architecture::ConvLSTM2D, b.cfg, b.H, b.W, b.T);
  r.paramsMeasured = store.total_size();
  return r;
}

// FA row then baseline row for every case.
inline std::vector<BenchRow> run_bench(const std::vector<BenchCase>& cases) {
  std::vector<BenchRow> rows;
  for (const auto& b : cases) {
    auto fa = measure_faconvlstm(b);
    auto base = measure_convlstm2d(b);
    fa.ratioVsBaseline = static_cast<double>(base.closed.macs) / static_cast<double>(fa.closed.macs);
    rows.push_back(fa);
    rows.push_back(base);
  }
  return rows;
}

inline bool counters_match(const BenchRow& r) {
  return r.macsMeasured == r.closed.macs && r.paramsMeasured == r.closed.params &&
         (r.arch == Architecture::ConvLSTM2D ||
          (r.headMacsMeasured == r.closed.headMacs && r.refinementsMeasured == r.closed.refinements));
}

// Rows where FA must be cheaper than the baseline: C_b <= F/2 and every
// kernel of size 3 or 5.
inline bool efficiency_asserted(const BenchCase& b) {
  if (2 * b.cfg.Cb > b.cfg.F) return false;
  for (const auto& k : b.cfg.kernelSet)
    if (k.k != 3 && k.k != 5) return false;
  return true;
}

inline std::string kernel_set_string(const std::vector<KernelBranch>& ks) {
  std::string s;
  for (const auto& k : ks) {
    if (!s.empty()) s += ";";
    s += std::to_string(k.k) + "d" + std::to_string(k.dilation);
  }
  return s;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "# MAC = one multiply-accumulate = one FLOP unit; contractions only (bias and residual adds excluded)\n"
        "# macs: recurrent-core MACs over T steps, axial counted at floor(T/K_t) steps; head_macs reported separately\n"
        "# dominant_term: per-site-per-step expression with big-O constants taken as exact coefficients\n";
  os << "arch,C,F,C_b,k_set,H,W,T,K_t,params,macs,dominant_term,ratio_vs_baseline,"
        "measured_macs,counters_match,bottleneck_macs,branch_macs,se_macs,gate_macs,axial_macs,head_macs\n";
  for (const auto& r : rows) {
    const auto& c = r.bench.cfg;
    char ratio[32];
    std::snprintf(ratio, sizeof(ratio), "%.6f", r.ratioVsBaseline);
    os << to_string(r.arch) << "," << c.C << "," << c.F << "," << c.Cb << "," << kernel_set_string(c.kernelSet) << ","
       << r.bench.H << "," << r.bench.W << "," << r.bench.T << "," << c.attnInterval << "," << r.closed.params << ","
       << r.closed.macs << "," << r.closed.analyticDominantTerm << "," << ratio << "," << r.macsMeasured << ","
       << (counters_match(r) ? "yes" : "no") << "," << r.closed.bottleneckMacs << "," << r.closed.branchMacs << ","
       << r.closed.seMacs << "," << r.closed.gateMacs << "," << r.closed.axialMacs << "," << r.closed.headMacs << "\n";
  }
}

}  // namespace faconv
