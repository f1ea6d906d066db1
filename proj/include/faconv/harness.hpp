#pragma once

// End-to-end evaluation: synthetic data -> train -> embed -> k-means ->
// metrics, for one or both architectures over several seeds.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "faconv/kmeans.hpp"
#include "faconv/metrics.hpp"
#include "faconv/synthetic.hpp"
#include "faconv/train.hpp"

namespace faconv {

inline constexpr int kSpecVersion = 1;

enum class Embedding { Z, S };

struct HarnessConfig {
  ModelConfig model;
  SyntheticSpec data;
  TrainSpec train;
  std::size_t k = 7;
  std::size_t restarts = 10;
  Embedding embedding = Embedding::Z;
  std::size_t seeds = 5;
  std::uint64_t baseSeed = 1;

  void validate() const {
    model.validate();
    data.validate();
    train.validate();
    if (model.C != data.C) throw ConfigError("model C must equal data C");
    if (k < 2) throw ConfigError("clustering needs k >= 2");
    if (k > data.T) throw ConfigError("k exceeds the number of timesteps");
    if (restarts < 1 || seeds < 1) throw ConfigError("restarts and seeds must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const HarnessConfig& c) {
  j = nlohmann::json{{"spec_version", kSpecVersion},
                     {"model", c.model},
                     {"data", c.data},
                     {"train", c.train},
                     {"cluster", {{"k", c.k}, {"restarts", c.restarts}, {"embedding", c.embedding == Embedding::Z ? "Z" : "S"}}},
                     {"seeds", c.seeds},
                     {"base_seed", c.baseSeed}};
}

inline void from_json(const nlohmann::json& j, HarnessConfig& c) {
  static const std::vector<std::string> known{"spec_version", "model", "data", "train", "cluster", "seeds", "base_seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config field '" + key + "'");
  }
  if (!j.contains("spec_version")) throw ConfigError("config is missing spec_version");
  if (j.at("spec_version").get<int>() != kSpecVersion) {
    throw ConfigError("unsupported spec_version " + j.at("spec_version").dump());
  }
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (j.contains("data")) c.data = j.at("data").get<SyntheticSpec>();
  if (j.contains("train")) c.train = j.at("train").get<TrainSpec>();
  if (j.contains("cluster")) {
    const auto& cl = j.at("cluster");
    for (const auto& [key, _] : cl.items()) {
      if (key != "k" && key != "restarts" && key != "embedding") throw ConfigError("unknown cluster field '" + key + "'");
    }
    c.k = cl.value("k", c.k);
    c.restarts = cl.value("restarts", c.restarts);
    if (cl.contains("embedding")) {
      const auto e = cl.at("embedding").get<std::string>();
      if (e != "Z" && e != "S") throw ConfigError("cluster.embedding must be Z or S");
      c.embedding = e == "Z" ? Embedding::Z : Embedding::S;
    }
  }
  c.seeds = j.value("seeds", c.seeds);
  c.baseSeed = j.value("base_seed", c.baseSeed);
}

inline HarnessConfig parse_harness_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  try {
    auto c = j.get<HarnessConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

struct Evaluation {
  Tensor4D embeddings;  // [1,1,T,D]
  std::vector<std::size_t> clusters;
  MetricsReport metrics;
  double accuracy = 0.0;
};

// Inference-mode forward over the whole sequence, clustering of the chosen
// embedding and the metric report. RMSE is reconstruction error on the
// held-out suffix (all timesteps when nothing is held out).
inline Evaluation evaluate(const SpatioTemporalModel& model, ParameterStore& store, const SyntheticSequence& data,
                           const HarnessConfig& cfg, std::uint64_t seed) {
  Tape tape;
  Context ctx{tape, store};
  const auto out = model.forward(ctx, data.frames);
  Evaluation ev;
  ev.embeddings = (cfg.embedding == Embedding::Z ? out.Z : out.S).value();
  const auto km = kmeans_cluster(ev.embeddings, {cfg.k, seed, cfg.restarts});
  ev.clusters = km.labels;
  const auto recon = model.reconstruct(ctx, out);
  std::size_t from = train_length(data.frames.size(), cfg.train.trainFraction);
  if (from >= data.frames.size()) from = 0;
  const std::vector<Tensor4D> pred(recon.begin() + static_cast<std::ptrdiff_t>(from), recon.end());
  const std::vector<Tensor4D> target(data.frames.begin() + static_cast<std::ptrdiff_t>(from), data.frames.end());
  ev.metrics = clustering_metrics(ev.embeddings, ev.clusters, pred, target);
  ev.metrics.seed = seed;
  ev.metrics.architecture = to_string(model.architecture());
  ev.accuracy = majority_vote_accuracy(ev.clusters, data.labels);
  return ev;
}

struct SeedRun {
  std::uint64_t seed = 0;
  Architecture arch = Architecture::FAConvLSTM;
  std::uint64_t params = 0;
  Evaluation untrained;
  Evaluation trained;
  TrainResult training;
  std::vector<std::size_t> truth;
};

inline SpatioTemporalModel make_model(Architecture arch, const ModelConfig& cfg) { return {arch, cfg}; }

inline SeedRun run_seed(const HarnessConfig& cfg, Architecture arch, std::uint64_t seed) {
  SyntheticSpec dspec = cfg.data;
  dspec.seed = seed;
  const auto data = generate_synthetic_sequence(dspec);
  const auto model = make_model(arch, cfg.model);
  ParameterStore store;
  std::seed_seq init_seed{seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(init_seed);
  model.init(store, rng);
  SeedRun run;
  run.seed = seed;
  run.arch = arch;
  run.params = store.total_size();
  run.truth = data.labels;
  run.untrained = evaluate(model, store, data, cfg, seed);
  TrainSpec tspec = cfg.train;
  tspec.seed = seed;
  run.training = train(model, store, data.frames, tspec);
  run.trained = evaluate(model, store, data, cfg, seed);
  return run;
}

inline std::vector<SeedRun> run_compare(const HarnessConfig& cfg, const std::vector<Architecture>& archs) {
  cfg.validate();
  std::vector<SeedRun> runs;
  for (std::size_t s = 0; s < cfg.seeds; ++s)
    for (auto arch : archs) runs.push_back(run_seed(cfg, arch, cfg.baseSeed + s));
  return runs;
}

// ---------------------------------------------------------------------------
// CSV emission. Every file starts with comment lines holding the resolved
// config, then a fixed header row.

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_config_header(std::ostream& os, const HarnessConfig& cfg) {
  os << "# faconv compare\n# config: " << nlohmann::json(cfg).dump() << "\n";
}

inline const char* kMetricsColumns =
    "seed,arch,stage,k,silhouette,davies_bouldin,calinski_harabasz,rmse,variance,inter_centroid_distance,"
    "accuracy,params,final_total_loss";

inline void write_metrics_csv(std::ostream& os, const HarnessConfig& cfg, const std::vector<SeedRun>& runs) {
  write_config_header(os, cfg);
  os << "# rmse: reconstruction RMSE on held-out timesteps; variance: pooled within-cluster variance per "
        "embedding dimension; inter_centroid_distance: mean pairwise centroid distance\n";
  os << kMetricsColumns << "\n";
  for (const auto& r : runs) {
    for (int stage = 0; stage < 2; ++stage) {
      const auto& ev = stage == 0 ? r.untrained : r.trained;
      const double loss = stage == 0 || r.training.log.empty() ? 0.0 : r.training.log.back().total;
      const auto& m = ev.metrics;
      os << r.seed << "," << to_string(r.arch) << "," << (stage == 0 ? "untrained" : "trained") << "," << m.k << ","
         << fmt(m.silhouette) << "," << fmt(m.daviesBouldin) << "," << fmt(m.calinskiHarabasz) << "," << fmt(m.rmse)
         << "," << fmt(m.variance) << "," << fmt(m.interCentroidDistance) << "," << fmt(ev.accuracy) << ","
         << r.params << "," << fmt(loss) << "\n";
    }
  }
}

inline void write_losses_csv(std::ostream& os, const HarnessConfig& cfg, const std::vector<SeedRun>& runs) {
  write_config_header(os, cfg);
  os << "seed,arch,step,task,spatial,temporal,total\n";
  for (const auto& r : runs)
    for (std::size_t s = 0; s < r.training.log.size(); ++s) {
      const auto& b = r.training.log[s];
      os << r.seed << "," << to_string(r.arch) << "," << s << "," << fmt(b.task) << "," << fmt(b.spatial) << ","
         << fmt(b.temporal) << "," << fmt(b.total) << "\n";
    }
}

inline void write_embeddings_csv(std::ostream& os, const HarnessConfig& cfg, const std::vector<SeedRun>& runs) {
  write_config_header(os, cfg);
  os << "seed,arch,stage,t,regime,cluster";
  for (std::size_t d = 0; d < cfg.model.subspaceDim; ++d) os << ",z" << d;
  os << "\n";
  for (const auto& r : runs)
    for (int stage = 0; stage < 2; ++stage) {
      const auto& ev = stage == 0 ? r.untrained : r.trained;
      for (std::size_t t = 0; t < ev.clusters.size(); ++t) {
        os << r.seed << "," << to_string(r.arch) << "," << (stage == 0 ? "untrained" : "trained") << "," << t << ","
           << r.truth[t] << "," << ev.clusters[t];
        for (std::size_t d = 0; d < ev.embeddings.cols(); ++d) os << "," << fmt(ev.embeddings.at(t, d));
        os << "\n";
      }
    }
}

// Mean of a trained/untrained metric over runs of one architecture.
template <class Get>
double mean_over(const std::vector<SeedRun>& runs, Architecture arch, Get get) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs)
    if (r.arch == arch) {
      s += get(r);
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace faconv
