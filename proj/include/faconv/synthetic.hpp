#pragma once

// Synthetic multi-regime spatiotemporal fields.
//
// The sequence is split into R contiguous regimes of equal length. Each regime
// owns a few Gaussian blobs that advect across a periodic grid with their own
// channel amplitudes (channels 0..C-2), and a pair of distant sites that carry
// a correlated driver on channel C-1. A global seasonal sinusoid is added to
// channel 0, then IID Gaussian noise everywhere.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "faconv/tensor.hpp"

namespace faconv {

struct SyntheticSpec {
  std::size_t T = 96, H = 16, W = 16, C = 4;
  std::size_t regimes = 3;
  std::size_t regimeLength = 32;
  double blobSpeed = 0.5;  // cells per step
  double teleconnectionGain = 0.9;
  double seasonPeriod = 24.0;
  double seasonAmplitude = 0.3;
  double noiseStd = 0.05;
  std::size_t blobsPerRegime = 3;
  double blobWidth = 4.0;  // Gaussian std in cells
  std::uint64_t seed = 1;

  void validate() const {
    if (regimes < 1) throw ConfigError("synthetic spec needs at least one regime");
    if (regimeLength < 1) throw ConfigError("regime length must be >= 1");
    if (T != regimes * regimeLength) {
      throw ConfigError("T (" + std::to_string(T) + ") must equal regimes * regime_length (" +
                        std::to_string(regimes * regimeLength) + ")");
    }
    if (H < 1 || W < 1) throw ConfigError("grid must be at least 1x1");
    if (C < 2) throw ConfigError("synthetic fields need C >= 2 (channel C-1 carries the teleconnection)");
    if (!(noiseStd >= 0.0)) throw ConfigError("noise std must be >= 0");
    if (!(seasonPeriod > 0.0)) throw ConfigError("season period must be > 0");
    if (!(teleconnectionGain >= -1.0 && teleconnectionGain <= 1.0)) {
      throw ConfigError("teleconnection gain must lie in [-1, 1]");
    }
    if (!(blobWidth > 0.0)) throw ConfigError("blob width must be > 0");
  }
};

struct SyntheticSequence {
  std::vector<Tensor4D> frames;  // T frames of [1,H,W,C]
  std::vector<std::size_t> labels;
  // Teleconnection sites per regime, as (row, col).
  std::vector<std::pair<std::size_t, std::size_t>> siteA, siteB;
};

namespace synthetic_detail {

struct Blob {
  double row0, col0, vrow, vcol;
  std::vector<double> amplitude;  // per channel 0..C-2
};

// Shortest signed offset on a ring of length n.
inline double wrap(double d, double n) {
  d = std::fmod(d, n);
  if (d > n / 2) d -= n;
  if (d < -n / 2) d += n;
  return d;
}

// Compact bump used for the teleconnection sites: exactly zero beyond two
// cells so the two sites never overlap.
inline double bump(double dr, double dc) {
  const double r2 = dr * dr + dc * dc;
  return r2 > 4.0 ? 0.0 : std::exp(-r2 / 2.0);
}

}  // namespace synthetic_detail

inline SyntheticSequence generate_synthetic_sequence(const SyntheticSpec& spec) {
  using namespace synthetic_detail;
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double H = static_cast<double>(spec.H), W = static_cast<double>(spec.W);

  std::vector<std::vector<Blob>> blobs(spec.regimes);
  SyntheticSequence out;
  for (std::size_t r = 0; r < spec.regimes; ++r) {
    for (std::size_t b = 0; b < spec.blobsPerRegime; ++b) {
      Blob blob;
      blob.row0 = unit(rng) * H;
      blob.col0 = unit(rng) * W;
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      blob.vrow = spec.blobSpeed * std::sin(angle);
      blob.vcol = spec.blobSpeed * std::cos(angle);
      for (std::size_t c = 0; c + 1 < spec.C; ++c) {
        const double mag = 0.5 + unit(rng);
        blob.amplitude.push_back(unit(rng) < 0.5 ? -mag : mag);
      }
      blobs[r].push_back(std::move(blob));
    }
    // Site a in the top-left quadrant, site b in the bottom-right one.
    const auto qh = std::max<std::size_t>(1, spec.H / 4), qw = std::max<std::size_t>(1, spec.W / 4);
    const std::size_t ar = static_cast<std::size_t>(unit(rng) * qh), ac = static_cast<std::size_t>(unit(rng) * qw);
    const std::size_t br = spec.H - 1 - static_cast<std::size_t>(unit(rng) * qh);
    const std::size_t bc = spec.W - 1 - static_cast<std::size_t>(unit(rng) * qw);
    out.siteA.emplace_back(ar, ac);
    out.siteB.emplace_back(br, bc);
  }

  const double g = spec.teleconnectionGain;
  const double g_perp = std::sqrt(std::max(0.0, 1.0 - g * g));
  double driver = 0.0;
  for (std::size_t t = 0; t < spec.T; ++t) {
    const std::size_t r = t / spec.regimeLength;
    const double local_t = static_cast<double>(t - r * spec.regimeLength);
    Tensor4D x({1, spec.H, spec.W, spec.C});

    for (const auto& blob : blobs[r]) {
      const double cr = blob.row0 + blob.vrow * local_t, cc = blob.col0 + blob.vcol * local_t;
      for (std::size_t i = 0; i < spec.H; ++i) {
        for (std::size_t j = 0; j < spec.W; ++j) {
          const double dr = wrap(static_cast<double>(i) - cr, H), dc = wrap(static_cast<double>(j) - cc, W);
          const double e = std::exp(-(dr * dr + dc * dc) / (2.0 * spec.blobWidth * spec.blobWidth));
          for (std::size_t c = 0; c + 1 < spec.C; ++c) x(0, i, j, c) += blob.amplitude[c] * e;
        }
      }
    }

    driver = 0.8 * driver + 0.6 * normal(rng);
    const double independent = normal(rng);
    const double a = driver, b = g * driver + g_perp * independent;
    const auto [ar, ac] = out.siteA[r];
    const auto [br, bc] = out.siteB[r];
    for (std::size_t i = 0; i < spec.H; ++i) {
      for (std::size_t j = 0; j < spec.W; ++j) {
        const double di = static_cast<double>(i), dj = static_cast<double>(j);
        x(0, i, j, spec.C - 1) += a * bump(di - static_cast<double>(ar), dj - static_cast<double>(ac)) +
                                  b * bump(di - static_cast<double>(br), dj - static_cast<double>(bc));
      }
    }

    const double season =
        spec.seasonAmplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.seasonPeriod);
    for (std::size_t i = 0; i < spec.H; ++i)
      for (std::size_t j = 0; j < spec.W; ++j) x(0, i, j, 0) += season;

    if (spec.noiseStd > 0.0) {
      for (auto& v : x.raw()) v += spec.noiseStd * normal(rng);
    }
    out.frames.push_back(std::move(x));
    out.labels.push_back(r);
  }
  return out;
}

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"T", s.T},
                     {"H", s.H},
                     {"W", s.W},
                     {"C", s.C},
                     {"regimes", s.regimes},
                     {"regime_length", s.regimeLength},
                     {"blob_speed", s.blobSpeed},
                     {"teleconnection_gain", s.teleconnectionGain},
                     {"season_period", s.seasonPeriod},
                     {"season_amplitude", s.seasonAmplitude},
                     {"noise_std", s.noiseStd},
                     {"blobs_per_regime", s.blobsPerRegime},
                     {"blob_width", s.blobWidth},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  static const std::vector<std::string> known{"T",           "H",          "W",
                                              "C",           "regimes",    "regime_length",
                                              "blob_speed",  "teleconnection_gain", "season_period",
                                              "season_amplitude", "noise_std", "blobs_per_regime",
                                              "blob_width",  "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown synthetic spec field '" + key + "'");
    }
  }
  s.T = j.value("T", s.T);
  s.H = j.value("H", s.H);
  s.W = j.value("W", s.W);
  s.C = j.value("C", s.C);
  s.regimes = j.value("regimes", s.regimes);
  s.regimeLength = j.value("regime_length", s.regimeLength);
  s.blobSpeed = j.value("blob_speed", s.blobSpeed);
  s.teleconnectionGain = j.value("teleconnection_gain", s.teleconnectionGain);
  s.seasonPeriod = j.value("season_period", s.seasonPeriod);
  s.seasonAmplitude = j.value("season_amplitude", s.seasonAmplitude);
  s.noiseStd = j.value("noise_std", s.noiseStd);
  s.blobsPerRegime = j.value("blobs_per_regime", s.blobsPerRegime);
  s.blobWidth = j.value("blob_width", s.blobWidth);
  s.seed = j.value("seed", s.seed);
}

}  // namespace faconv
