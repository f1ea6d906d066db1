#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "faconv/tensor.hpp"

namespace faconv {

struct KernelBranch {
  std::size_t k = 3;
  std::size_t dilation = 1;
  bool operator==(const KernelBranch&) const = default;
};

enum class Pooling { Mean, Attention };

inline std::string to_string(Pooling p) { return p == Pooling::Mean ? "mean" : "attn"; }

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "mean") return Pooling::Mean;
  if (s == "attn") return Pooling::Attention;
  throw ConfigError("unknown pooling mode '" + s + "' (expected mean|attn)");
}

// Architectural hyperparameters shared by the FAConvLSTM layer, its head and
// the ConvLSTM2D baseline (which reads C, F, baselineKernel and the head
// fields).
struct ModelConfig {
  std::size_t C = 4;   // input channels
  std::size_t F = 16;  // hidden channels
  std::size_t Cb = 4;  // bottleneck channels
  std::vector<KernelBranch> kernelSet{{3, 1}, {5, 1}, {3, 2}};
  std::size_t seRatio = 4;
  std::size_t attnInterval = 4;  // K_t
  std::size_t axialHeads = 2;
  std::size_t subspaceDim = 8;  // D
  std::size_t temporalHeads = 2;
  double dropoutRate = 0.0;
  std::size_t normGroups = 1;
  double normEps = 1e-5;
  double seasonPeriod = 24.0;
  double forgetBias = 1.0;
  Pooling pooling = Pooling::Mean;
  bool mhaResidual = true;
  bool shareAxialProjections = true;
  bool axialEnabled = true;
  bool peepholes = true;
  std::size_t baselineKernel = 3;

  std::size_t seHidden() const { return std::max<std::size_t>(1, 2 * Cb / seRatio); }

  void validate() const {
    if (C == 0 || F == 0) throw ConfigError("C and F must be >= 1");
    if (Cb < 1) throw ConfigError("bottleneck channels C_b must be >= 1");
    if (subspaceDim < 1) throw ConfigError("subspace dimension D must be >= 1");
    if (attnInterval < 1) throw ConfigError("attention interval K_t must be >= 1");
    if (seRatio < 1) throw ConfigError("SE ratio must be >= 1");
    if (kernelSet.empty()) throw ConfigError("kernel set must not be empty");
    for (const auto& b : kernelSet) {
      if (b.k % 2 == 0) throw ConfigError("kernel size must be odd, got " + std::to_string(b.k));
      if (b.dilation < 1) throw ConfigError("dilation must be >= 1");
    }
    if (baselineKernel % 2 == 0) throw ConfigError("baseline kernel must be odd");
    if (normGroups < 1 || F % normGroups != 0 || Cb % normGroups != 0) {
      throw ConfigError("norm groups must divide both F and C_b");
    }
    if (axialHeads < 1 || F % axialHeads != 0) throw ConfigError("F must be divisible by axial heads");
    if (temporalHeads < 1 || subspaceDim % temporalHeads != 0) {
      throw ConfigError("D must be divisible by temporal heads");
    }
    if (subspaceDim % 2 != 0) throw ConfigError("D must be even for the sinusoidal encoding");
    if (!(dropoutRate >= 0.0 && dropoutRate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
    if (!(normEps > 0.0)) throw ConfigError("norm eps must be > 0");
    if (!(seasonPeriod > 0.0)) throw ConfigError("season period must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  nlohmann::json ks = nlohmann::json::array();
  for (const auto& b : m.kernelSet) ks.push_back({b.k, b.dilation});
  j = nlohmann::json{{"C", m.C},
                     {"F", m.F},
                     {"C_b", m.Cb},
                     {"kernel_set", ks},
                     {"se_ratio", m.seRatio},
                     {"attn_interval", m.attnInterval},
                     {"axial_heads", m.axialHeads},
                     {"subspace_dim", m.subspaceDim},
                     {"temporal_heads", m.temporalHeads},
                     {"dropout", m.dropoutRate},
                     {"norm_groups", m.normGroups},
                     {"norm_eps", m.normEps},
                     {"season_period", m.seasonPeriod},
                     {"forget_bias", m.forgetBias},
                     {"pooling", to_string(m.pooling)},
                     {"mha_residual", m.mhaResidual},
                     {"share_axial_projections", m.shareAxialProjections},
                     {"axial_enabled", m.axialEnabled},
                     {"peepholes", m.peepholes},
                     {"baseline_kernel", m.baselineKernel}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
  static const std::vector<std::string> known{
      "C",           "F",          "C_b",         "kernel_set",   "se_ratio",     "attn_interval",
      "axial_heads", "subspace_dim", "temporal_heads", "dropout",   "norm_groups",  "norm_eps",
      "season_period", "forget_bias", "pooling",    "mha_residual", "share_axial_projections",
      "axial_enabled", "peepholes",  "baseline_kernel"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown model config field '" + key + "'");
    }
  }
  m.C = j.value("C", m.C);
  m.F = j.value("F", m.F);
  m.Cb = j.value("C_b", m.Cb);
  if (j.contains("kernel_set")) {
    m.kernelSet.clear();
    for (const auto& b : j.at("kernel_set")) {
      if (!b.is_array() || b.size() != 2) throw ConfigError("kernel_set entries must be [k, dilation]");
      m.kernelSet.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>()});
    }
  }
  m.seRatio = j.value("se_ratio", m.seRatio);
  m.attnInterval = j.value("attn_interval", m.attnInterval);
  m.axialHeads = j.value("axial_heads", m.axialHeads);
  m.subspaceDim = j.value("subspace_dim", m.subspaceDim);
  m.temporalHeads = j.value("temporal_heads", m.temporalHeads);
  m.dropoutRate = j.value("dropout", m.dropoutRate);
  m.normGroups = j.value("norm_groups", m.normGroups);
  m.normEps = j.value("norm_eps", m.normEps);
  m.seasonPeriod = j.value("season_period", m.seasonPeriod);
  m.forgetBias = j.value("forget_bias", m.forgetBias);
  if (j.contains("pooling")) m.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  m.mhaResidual = j.value("mha_residual", m.mhaResidual);
  m.shareAxialProjections = j.value("share_axial_projections", m.shareAxialProjections);
  m.axialEnabled = j.value("axial_enabled", m.axialEnabled);
  m.peepholes = j.value("peepholes", m.peepholes);
  m.baselineKernel = j.value("baseline_kernel", m.baselineKernel);
}

}  // namespace faconv
