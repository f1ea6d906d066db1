#pragma once

// Closed-form parameter and multiply-accumulate accounting for FAConvLSTM and
// ConvLSTM2D. One MAC is one FLOP unit. Only contractions are counted
// (convolutions including zero-padded taps, attention products, SE
// mat-vecs, attention pooling); elementwise work, bias and residual adds are
// left out, matching the runtime counters in kernels.hpp.
//
// The "dominant term" columns evaluate the two per-site-per-step complexity
// expressions with their big-O constants taken as exact coefficients:
//   ConvLSTM2D : k^2 (C + F) F
//   FAConvLSTM : C C_b + F C_b + k^2 C_b^2

#include <algorithm>
#include <cstdint>
#include <string>

#include "faconv/config.hpp"

namespace faconv {

enum class Architecture { FAConvLSTM, ConvLSTM2D };

inline std::string to_string(Architecture a) { return a == Architecture::FAConvLSTM ? "faconvlstm" : "convlstm2d"; }

inline Architecture architecture_from_string(const std::string& s) {
  if (s == "faconvlstm" || s == "fa") return Architecture::FAConvLSTM;
  if (s == "convlstm2d" || s == "convlstm") return Architecture::ConvLSTM2D;
  throw ConfigError("unknown architecture '" + s + "'");
}

struct CostReport {
  Architecture arch = Architecture::FAConvLSTM;
  ModelConfig config;
  std::size_t H = 0, W = 0, T = 0;
  std::uint64_t params = 0;
  // Recurrent-core MACs for the whole sequence (axial included at its steps).
  std::uint64_t macs = 0;
  std::uint64_t macsPerStep = 0;  // recurrent MACs of one step, no axial
  std::uint64_t bottleneckMacs = 0;
  std::uint64_t branchMacs = 0;
  std::uint64_t seMacs = 0;
  std::uint64_t gateMacs = 0;
  std::uint64_t axialMacs = 0;  // total over the sequence
  std::uint64_t axialPerRefinement = 0;
  std::uint64_t refinements = 0;
  std::uint64_t headMacs = 0;  // subspace head + temporal attention
  std::uint64_t analyticDominantTerm = 0;
};

inline std::uint64_t u64(std::size_t v) { return static_cast<std::uint64_t>(v); }

inline std::size_t analytic_kernel(const ModelConfig& cfg) {
  std::size_t k = 1;
  for (const auto& b : cfg.kernelSet) k = std::max(k, b.k);
  return k;
}

inline std::uint64_t convlstm_dominant_term(std::size_t k, std::size_t C, std::size_t F) {
  return u64(k) * k * (C + F) * F;
}

inline std::uint64_t faconvlstm_dominant_term(std::size_t k, std::size_t C, std::size_t F, std::size_t Cb) {
  return u64(C) * Cb + u64(F) * Cb + u64(k) * k * Cb * Cb;
}

inline double dominant_term_ratio(std::size_t k, std::size_t C, std::size_t F, std::size_t Cb) {
  return static_cast<double>(convlstm_dominant_term(k, C, F)) /
         static_cast<double>(faconvlstm_dominant_term(k, C, F, Cb));
}

inline std::uint64_t head_params(const ModelConfig& cfg) {
  const auto D = u64(cfg.subspaceDim);
  std::uint64_t n = u64(cfg.F) * D + 4 * D * D;
  if (cfg.pooling == Pooling::Attention) n += D;
  return n;
}

inline std::uint64_t count_params(Architecture arch, const ModelConfig& cfg) {
  const auto C = u64(cfg.C), F = u64(cfg.F), Cb = u64(cfg.Cb);
  if (arch == Architecture::ConvLSTM2D) {
    if (cfg.baselineKernel % 2 == 0) throw ConfigError("baseline kernel must be odd");
    const auto k = u64(cfg.baselineKernel);
    return 4 * k * k * (C + F) * F + 4 * F;
  }
  cfg.validate();
  const auto U = 2 * Cb;
  std::uint64_t n = 0;
  n += C * Cb + 2 * Cb;  // input bottleneck + norm affine
  n += F * Cb + 2 * Cb;  // hidden bottleneck + norm affine
  for (const auto& b : cfg.kernelSet) n += u64(b.k) * b.k * U;
  n += 2 * U * u64(cfg.seHidden());
  n += 2 * U;               // post-SE norm affine
  n += U * 4 * F + 4 * F;   // fused gates
  if (cfg.peepholes) n += 2 * F;
  if (cfg.axialEnabled) n += (cfg.shareAxialProjections ? 3 : 6) * F * F + F * F;
  n += head_params(cfg);
  return n;
}

inline std::uint64_t axial_macs_per_refinement(std::size_t H, std::size_t W, const ModelConfig& cfg) {
  const auto S = u64(H) * W, F = u64(cfg.F);
  // Q/K/V for the row pass and again for the column pass, output projection,
  // then QK^T and AV along rows (length W) and columns (length H).
  return 7 * S * F * F + 2 * S * F * (u64(H) + W);
}

inline std::uint64_t full_attention_macs(std::size_t H, std::size_t W, const ModelConfig& cfg) {
  const auto S = u64(H) * W, F = u64(cfg.F);
  return 4 * S * F * F + 2 * S * S * F;
}

inline std::uint64_t head_macs(std::size_t H, std::size_t W, std::size_t T, const ModelConfig& cfg) {
  const auto S = u64(H) * W, F = u64(cfg.F), D = u64(cfg.subspaceDim), TT = u64(T);
  std::uint64_t per_step = S * F * D;
  if (cfg.pooling == Pooling::Attention) per_step += 2 * S * D;  // scores + weighted sum
  return TT * per_step + 4 * TT * D * D + 2 * TT * TT * D;
}

inline CostReport count_flops(Architecture arch, const ModelConfig& cfg, std::size_t H, std::size_t W,
                              std::size_t T) {
  if (H == 0 || W == 0 || T == 0) throw ArgumentError("count_flops needs H, W, T >= 1");
  CostReport r;
  r.arch = arch;
  r.config = cfg;
  r.H = H;
  r.W = W;
  r.T = T;
  r.params = count_params(arch, cfg);
  const auto S = u64(H) * W, C = u64(cfg.C), F = u64(cfg.F), Cb = u64(cfg.Cb), TT = u64(T);
  if (arch == Architecture::ConvLSTM2D) {
    const auto k = u64(cfg.baselineKernel);
    r.gateMacs = S * k * k * (C + F) * 4 * F;
    r.macsPerStep = r.gateMacs;
    r.macs = TT * r.macsPerStep;
    r.gateMacs *= TT;
    r.analyticDominantTerm = convlstm_dominant_term(cfg.baselineKernel, cfg.C, cfg.F);
    return r;
  }
  const auto U = 2 * Cb;
  std::uint64_t branch = 0;
  for (const auto& b : cfg.kernelSet) branch += S * U * u64(b.k) * b.k;
  const std::uint64_t bottleneck = S * C * Cb + S * F * Cb;
  const std::uint64_t se = 2 * U * u64(cfg.seHidden());
  const std::uint64_t gates = S * U * 4 * F;
  r.macsPerStep = bottleneck + branch + se + gates;
  r.bottleneckMacs = TT * bottleneck;
  r.branchMacs = TT * branch;
  r.seMacs = TT * se;
  r.gateMacs = TT * gates;
  r.refinements = cfg.axialEnabled ? TT / cfg.attnInterval : 0;
  r.axialPerRefinement = cfg.axialEnabled ? axial_macs_per_refinement(H, W, cfg) : 0;
  r.axialMacs = r.refinements * r.axialPerRefinement;
  r.macs = TT * r.macsPerStep + r.axialMacs;
  r.headMacs = head_macs(H, W, T, cfg);
  r.analyticDominantTerm = faconvlstm_dominant_term(analytic_kernel(cfg), cfg.C, cfg.F, cfg.Cb);
  return r;
}

}  // namespace faconv
